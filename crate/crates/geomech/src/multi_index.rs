//! Symmetric multi-indices (exponent vectors) used to address components of
//! symmetric tensors and derivative slots of differential operators.

use std::cmp::Ordering;

/// Exponent vector over `dim` coordinates. Total order: by degree `|alpha|`
/// first, then earlier coordinates with higher exponents sort first, so that
/// in two dimensions degree two enumerates as `x^2, x y, y^2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = vec![0; dim];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn plus_unit(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v[i] += 1;
        MultiIndex(v)
    }

    /// `|alpha|! / prod(alpha_i!)`: the number of index tuples collapsing to
    /// this multi-index.
    pub fn multinomial(&self) -> f64 {
        fn fact(n: u32) -> f64 {
            (1..=n).map(|k| k as f64).product()
        }
        fact(self.order()) / self.0.iter().map(|&e| fact(e)).product::<f64>()
    }

    /// Sorted index tuple `(j1 <= j2 <= ... <= jr)` expanding the exponents.
    pub fn tuple(&self) -> Vec<usize> {
        let mut t = Vec::with_capacity(self.order() as usize);
        for (i, &e) in self.0.iter().enumerate() {
            for _ in 0..e {
                t.push(i);
            }
        }
        t
    }

    /// Multi-index collapsing an index tuple.
    pub fn from_tuple(dim: usize, tuple: &[usize]) -> Self {
        let mut v = vec![0u32; dim];
        for &j in tuple {
            v[j] += 1;
        }
        MultiIndex(v)
    }

    /// All multi-indices of the given order, in canonical order.
    pub fn enumerate(dim: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut current = vec![0u32; dim];
        fn rec(out: &mut Vec<MultiIndex>, current: &mut Vec<u32>, slot: usize, remaining: u32) {
            if slot + 1 == current.len() {
                current[slot] = remaining;
                out.push(MultiIndex(current.clone()));
                return;
            }
            for e in 0..=remaining {
                current[slot] = e;
                rec(out, current, slot + 1, remaining - e);
            }
            current[slot] = 0;
        }
        if dim == 0 {
            if order == 0 {
                out.push(MultiIndex(vec![]));
            }
            return out;
        }
        rec(&mut out, &mut current, 0, order);
        out.sort();
        out
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.order().cmp(&other.order()) {
            Ordering::Equal => {
                for (a, b) in self.0.iter().zip(&other.0) {
                    match b.cmp(a) {
                        Ordering::Equal => continue,
                        ord => return ord,
                    }
                }
                Ordering::Equal
            }
            ord => ord,
        }
    }
}

/// All index tuples (with repetition, unordered ones counted once via the
/// sorted representative) of length `r` over `dim` coordinates.
pub fn sorted_tuples(dim: usize, r: u32) -> Vec<Vec<usize>> {
    MultiIndex::enumerate(dim, r)
        .iter()
        .map(|m| m.tuple())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_degree_then_x_major() {
        let all: Vec<MultiIndex> = (0..=2).flat_map(|r| MultiIndex::enumerate(2, r)).collect();
        let expect: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(all.iter().map(|m| m.0.clone()).collect::<Vec<_>>(), expect);
    }

    #[test]
    fn multinomials() {
        assert_eq!(MultiIndex(vec![2, 0]).multinomial(), 1.0);
        assert_eq!(MultiIndex(vec![1, 1]).multinomial(), 2.0);
        assert_eq!(MultiIndex(vec![1, 1, 1]).multinomial(), 6.0);
        assert_eq!(MultiIndex(vec![2, 1]).multinomial(), 3.0);
    }

    #[test]
    fn tuple_round_trip() {
        let m = MultiIndex(vec![1, 0, 2]);
        assert_eq!(m.tuple(), vec![0, 2, 2]);
        assert_eq!(MultiIndex::from_tuple(3, &m.tuple()), m);
    }
}
