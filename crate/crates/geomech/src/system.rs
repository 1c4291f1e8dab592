//! JSON system descriptions: coordinates, metric entries and the force law
//! as expression strings, plus the optional physical parameters used by the
//! command-line surface.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{MechSystem, State};
use crate::error::{Error, Result};
use crate::expr::{parse, Expression};
use crate::geometry::MetricField;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDescription {
    pub coordinates: Vec<String>,
    /// Square matrix of expression strings over the coordinates; must be
    /// symmetric as parsed text.
    pub metric: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    /// Force covector components over coordinates and `<name>dot` velocity
    /// symbols. Mutually exclusive with `potential`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_form: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_coordinate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, rename = "P0", skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default, rename = "E", skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Points where metric regularity is checked at load time.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sample_points: Vec<Vec<f64>>,
}

/// A description parsed, regularity-checked and built into a mechanical
/// system with its physical parameters resolved.
#[derive(Debug)]
pub struct LoadedSystem {
    pub desc: SystemDescription,
    pub sys: MechSystem,
    pub hbar: f64,
    pub c: f64,
    pub p0: Option<f64>,
    pub energy: Option<f64>,
    pub time_index: Option<usize>,
}

fn schema(path: &str, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        msg: msg.into(),
    }
}

impl SystemDescription {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl LoadedSystem {
    pub fn from_path(path: &Path) -> Result<Self> {
        Self::build(SystemDescription::from_path(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::build(serde_json::from_str(text)?)
    }

    pub fn build(desc: SystemDescription) -> Result<Self> {
        let n = desc.coordinates.len();
        if n == 0 {
            return Err(schema("coordinates", "at least one coordinate is required"));
        }
        for (i, a) in desc.coordinates.iter().enumerate() {
            for b in desc.coordinates.iter().skip(i + 1) {
                if a == b {
                    return Err(schema("coordinates", format!("duplicate coordinate `{a}`")));
                }
            }
        }
        let coord_refs: Vec<&str> = desc.coordinates.iter().map(|s| s.as_str()).collect();
        let tm_names: Vec<String> = desc
            .coordinates
            .iter()
            .cloned()
            .chain(desc.coordinates.iter().map(|c| format!("{c}dot")))
            .collect();
        let tm_refs: Vec<&str> = tm_names.iter().map(|s| s.as_str()).collect();

        if desc.metric.len() != n || desc.metric.iter().any(|row| row.len() != n) {
            return Err(schema(
                "metric",
                format!("matrix must be {n}x{n} over the chart"),
            ));
        }
        let mut rows = vec![vec![Expression::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                rows[i][j] = parse(&desc.metric[i][j], &coord_refs)
                    .map_err(|e| schema(&format!("metric[{i}][{j}]"), e.to_string()))?;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !rows[i][j].structural_eq(&rows[j][i]) {
                    return Err(schema(
                        &format!("metric[{i}][{j}]"),
                        "matrix is not symmetric as parsed text",
                    ));
                }
            }
        }
        let metric = MetricField::new(desc.coordinates.clone(), rows)?;

        for (k, p) in desc.sample_points.iter().enumerate() {
            if p.len() != n {
                return Err(schema(
                    &format!("sample_points[{k}]"),
                    format!("expected {n} coordinates, found {}", p.len()),
                ));
            }
        }
        metric.check_regular(&desc.sample_points, 1e-12)?;

        let sys = match (&desc.potential, &desc.force_form) {
            (Some(_), Some(_)) => {
                return Err(schema(
                    "potential",
                    "potential and force_form are mutually exclusive",
                ));
            }
            (Some(u), None) => {
                let u = parse(u, &coord_refs).map_err(|e| schema("potential", e.to_string()))?;
                MechSystem::conservative(metric, u)
            }
            (None, Some(form)) => {
                if form.len() != n {
                    return Err(schema("force_form", format!("expected {n} components")));
                }
                let mut alpha = Vec::with_capacity(n);
                for (k, text) in form.iter().enumerate() {
                    alpha.push(
                        parse(text, &tm_refs)
                            .map_err(|e| schema(&format!("force_form[{k}]"), e.to_string()))?,
                    );
                }
                MechSystem::forced(metric, alpha)?
            }
            (None, None) => MechSystem::geodesic(metric),
        };

        let time_index = match &desc.time_coordinate {
            Some(name) => Some(desc.coordinates.iter().position(|c| c == name).ok_or_else(
                || schema("time_coordinate", format!("`{name}` is not a coordinate")),
            )?),
            None => None,
        };

        Ok(LoadedSystem {
            hbar: desc.hbar.unwrap_or(1.0),
            c: desc.c.unwrap_or(1.0),
            p0: desc.p0,
            energy: desc.energy,
            time_index,
            sys,
            desc,
        })
    }

    /// Seeding convention for the command-line surface: position at the
    /// first sample point, velocity along the metric-normalized last
    /// coordinate axis, speed fixed by the requested energy level (unit
    /// speed when none is given).
    pub fn default_seed(&self, energy: Option<f64>) -> Result<State> {
        let x0 =
            self.desc.sample_points.first().cloned().ok_or_else(|| {
                Error::Precondition("seeding needs at least one sample point".into())
            })?;
        let n = self.sys.dim();
        let g = self.sys.metric().eval_matrix(&x0)?;
        let axis = n - 1;
        if g[axis][axis] <= 0.0 {
            return Err(Error::Precondition(
                "default seeding needs a positive last metric diagonal entry".into(),
            ));
        }
        let mut v = vec![0.0; n];
        v[axis] = 1.0 / g[axis][axis].sqrt();
        let speed = match energy {
            Some(e) => {
                let u0 = match self.sys.potential() {
                    Some(u) => u.eval(&x0)?,
                    None => 0.0,
                };
                let t = e - u0;
                if t <= 0.0 {
                    return Err(Error::Precondition(format!(
                        "energy {e} does not exceed the potential {u0} at the seed"
                    )));
                }
                (2.0 * t).sqrt()
            }
            None => 1.0,
        };
        for c in v.iter_mut() {
            *c *= speed;
        }
        Ok(State::new(x0, v))
    }

    /// Description of a Hertz-reduced system, for re-export as JSON.
    pub fn reduced_description(&self, reduced: &MechSystem) -> SystemDescription {
        let names = reduced.names().to_vec();
        let n = names.len();
        let metric_text = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| reduced.metric().g(i, j).to_text(&names))
                    .collect()
            })
            .collect();
        let potential = reduced.potential().map(|u| u.to_text(&names));
        let time_index = self.time_index.unwrap_or(0);
        let sample_points = self
            .desc
            .sample_points
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != time_index)
                    .map(|(_, v)| *v)
                    .collect()
            })
            .collect();
        SystemDescription {
            coordinates: names,
            metric: metric_text,
            potential,
            force_form: None,
            time_coordinate: None,
            hbar: self.desc.hbar,
            c: self.desc.c,
            p0: self.desc.p0,
            energy: self.desc.energy,
            sample_points,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEPLER: &str = r#"{
        "coordinates": ["x", "y"],
        "metric": [["1", "0"], ["0", "1"]],
        "potential": "-1/sqrt(x^2 + y^2)",
        "sample_points": [[1.0, 0.0], [0.0, 2.0]]
    }"#;

    #[test]
    fn loads_a_kepler_description() {
        let loaded = LoadedSystem::from_json(KEPLER).unwrap();
        assert_eq!(loaded.sys.dim(), 2);
        assert_eq!(loaded.hbar, 1.0);
        let seed = loaded.default_seed(Some(-0.5)).unwrap();
        assert_eq!(seed.x, vec![1.0, 0.0]);
        assert!((seed.v[1] - 1.0).abs() < 1e-14);
        let h = loaded.sys.hamiltonian(&seed).unwrap();
        assert!((h + 0.5).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_metric_text_is_a_schema_error() {
        let text = r#"{
            "coordinates": ["x", "y"],
            "metric": [["1", "x"], ["0", "1"]]
        }"#;
        match LoadedSystem::from_json(text) {
            Err(Error::Schema { path, .. }) => assert!(path.starts_with("metric[0][1]")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn expression_errors_carry_the_field_path() {
        let text = r#"{
            "coordinates": ["x"],
            "metric": [["1"]],
            "potential": "sin("
        }"#;
        match LoadedSystem::from_json(text) {
            Err(Error::Schema { path, msg }) => {
                assert_eq!(path, "potential");
                assert!(msg.contains("offset 4"), "{msg}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn singular_metric_at_samples_is_rejected() {
        let text = r#"{
            "coordinates": ["r", "theta"],
            "metric": [["1", "0"], ["0", "r^2"]],
            "sample_points": [[0.0, 0.0]]
        }"#;
        assert!(matches!(
            LoadedSystem::from_json(text),
            Err(Error::SingularMetric { .. })
        ));
    }

    #[test]
    fn hertz_description_is_reducible() {
        let text = r#"{
            "coordinates": ["t", "x", "y"],
            "metric": [["-sqrt(x^2 + y^2)/2", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
            "time_coordinate": "t",
            "P0": 1.0,
            "sample_points": [[0.0, 1.0, 0.0]]
        }"#;
        let loaded = LoadedSystem::from_json(text).unwrap();
        let reduced = crate::dynamics::hertz_reduce(
            &loaded.sys,
            loaded.time_index.unwrap(),
            loaded.p0.unwrap(),
            &loaded.desc.sample_points,
        )
        .unwrap();
        let round = loaded.reduced_description(&reduced);
        let reparsed = LoadedSystem::build(round).unwrap();
        let u = reparsed.sys.potential().unwrap();
        assert!((u.eval(&[0.6, 0.8]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn force_form_uses_velocity_symbols() {
        let text = r#"{
            "coordinates": ["x"],
            "metric": [["1"]],
            "force_form": ["xdot/2"],
            "sample_points": [[0.0]]
        }"#;
        let loaded = LoadedSystem::from_json(text).unwrap();
        assert!(!loaded.sys.is_conservative());
        use crate::dynamics::SecondOrderField;
        let field = loaded.sys.newton_field().unwrap();
        let mut a = [0.0_f64];
        field.accel(&[0.0], &[2.0], &mut a).unwrap();
        assert!((a[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{
            "coordinates": ["x"],
            "metric": [["1"]],
            "unknown_knob": 1.0
        }"#;
        assert!(LoadedSystem::from_json(text).is_err());
    }
}
