//! Problem documents in TOML.
//!
//! ```toml
//! [objective.quadratic]
//! W = [{ i = 0, j = 0, v = 1.0 }]
//! c = [0.0]
//!
//! [constraint]
//! type = "eq"
//! A = [{ i = 0, j = 0, v = 1.0 }]
//! b = [1.0]
//!
//! [bounds]
//! l = [-inf]
//! u = [2.0]
//!
//! [solution]
//! x = [1.0]
//! y = [-1.0]
//! ```
//!
//! A named objective replaces the quadratic table with
//! `objective = { named = { name = "logistic", n = 3 } }`.

use std::path::Path;
use std::sync::Arc;

use bpalm::problem::SmoothKind;
use bpalm::{AffineMap, NonsmoothTerm, ProblemSpec, SmoothObjective, SparseMatrix};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::functions::{Logistic, SumExp};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub objective: Objective,
    pub constraint: Constraint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Solution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Objective {
    Quadratic {
        #[serde(rename = "W")]
        w: Vec<Triplet>,
        c: Vec<f64>,
    },
    Named {
        name: NamedFunction,
        n: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedFunction {
    SumExp,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Eq,
    Ineq,
    Vecmax,
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    #[serde(rename = "type")]
    pub kind: ConstraintKind,
    #[serde(rename = "A")]
    pub a: Vec<Triplet>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Where finite box bounds end up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsRoute {
    /// Into the domain of a box-barrier primal geometry.
    Barrier,
    /// Appended to `A x - b <= 0` as extra inequality rows.
    Constraint,
}

/// A canonical problem together with the bounds left for the primal
/// geometry.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub spec: ProblemSpec,
    pub barrier_bounds: Option<(Vec<f64>, Vec<f64>)>,
    /// Rows of `A` that came from the document, before appended bounds.
    pub original_rows: usize,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ProblemFile = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Document for a problem with a quadratic objective.
    pub fn from_spec(spec: &ProblemSpec, bounds: Option<Bounds>, solution: Option<Solution>) -> Result<Self, CliError> {
        let SmoothKind::Quadratic { w, c } = &spec.f.kind else {
            return Err(CliError::Usage("only quadratic objectives can be written as documents".into()));
        };
        let kind = match spec.g {
            NonsmoothTerm::ZeroIndicator => ConstraintKind::Eq,
            NonsmoothTerm::NonposOrthant => ConstraintKind::Ineq,
            NonsmoothTerm::VecMax => ConstraintKind::Vecmax,
            NonsmoothTerm::OneNorm => ConstraintKind::L1,
        };
        let trip = |m: &SparseMatrix| m.triplets().iter().map(|&(i, j, v)| Triplet { i, j, v }).collect();
        let file = ProblemFile {
            objective: Objective::Quadratic { w: trip(w), c: c.iter().copied().collect() },
            constraint: Constraint { kind, a: trip(&spec.map.a), b: spec.map.b.iter().copied().collect() },
            bounds,
            solution,
        };
        file.check()?;
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem documents always serialize")
    }

    pub fn n(&self) -> usize {
        match &self.objective {
            Objective::Quadratic { c, .. } => c.len(),
            Objective::Named { n, .. } => *n,
        }
    }

    pub fn m(&self) -> usize {
        self.constraint.b.len()
    }

    /// True when at least one bound is finite.
    pub fn has_bounds(&self) -> bool {
        self.bounds.as_ref().is_some_and(|b| b.l.iter().chain(&b.u).any(|v| v.is_finite()))
    }

    fn check(&self) -> Result<(), CliError> {
        let n = self.n();
        let m = self.m();
        if n == 0 {
            return Err(CliError::Dimension("the objective has no variables".into()));
        }
        if let Objective::Quadratic { w, .. } = &self.objective {
            check_triplets("objective.quadratic.W", w, n, n)?;
        }
        check_triplets("constraint.A", &self.constraint.a, m, n)?;
        if let Some(b) = &self.bounds {
            if b.l.len() != n || b.u.len() != n {
                return Err(CliError::Dimension(format!(
                    "bounds have lengths {} and {} for {n} variables",
                    b.l.len(),
                    b.u.len()
                )));
            }
            if let Some(i) = (0..n).find(|&i| b.l[i].is_nan() || b.u[i].is_nan() || b.l[i] >= b.u[i]) {
                return Err(CliError::Parse(format!("bounds: empty interval at index {i}")));
            }
        }
        if let Some(s) = &self.solution {
            if s.x.len() != n || s.y.len() != m {
                return Err(CliError::Dimension(format!(
                    "solution has lengths ({}, {}) for a problem with n = {n}, m = {m}",
                    s.x.len(),
                    s.y.len()
                )));
            }
        }
        Ok(())
    }

    pub fn nonsmooth_term(&self) -> NonsmoothTerm {
        match self.constraint.kind {
            ConstraintKind::Eq => NonsmoothTerm::ZeroIndicator,
            ConstraintKind::Ineq => NonsmoothTerm::NonposOrthant,
            ConstraintKind::Vecmax => NonsmoothTerm::VecMax,
            ConstraintKind::L1 => NonsmoothTerm::OneNorm,
        }
    }

    pub fn build(&self, route: BoundsRoute) -> Result<BuiltProblem, CliError> {
        let n = self.n();
        let f = match &self.objective {
            Objective::Quadratic { w, c } => {
                let w = SparseMatrix::from_triplets(n, n, &triples(w))?;
                SmoothObjective::quadratic(w, DVector::from_column_slice(c))?
            }
            Objective::Named { name: NamedFunction::SumExp, .. } => {
                SmoothObjective::callback(Arc::new(SumExp), 1.0, None, None)
            }
            Objective::Named { name: NamedFunction::Logistic, .. } => {
                SmoothObjective::callback(Arc::new(Logistic), 1.0, Some(0.25), None)
            }
        };
        let mut rows = triples(&self.constraint.a);
        let mut b = self.constraint.b.clone();
        let original_rows = b.len();
        let mut barrier_bounds = None;
        if self.has_bounds() {
            let bounds = self.bounds.as_ref().expect("checked above");
            match route {
                BoundsRoute::Barrier => barrier_bounds = Some((bounds.l.clone(), bounds.u.clone())),
                BoundsRoute::Constraint => {
                    if self.constraint.kind != ConstraintKind::Ineq {
                        return Err(CliError::Usage(
                            "bounds on a non-inequality problem need the box_barrier primal geometry".into(),
                        ));
                    }
                    for i in 0..n {
                        if bounds.u[i].is_finite() {
                            rows.push((b.len(), i, 1.0));
                            b.push(bounds.u[i]);
                        }
                        if bounds.l[i].is_finite() {
                            rows.push((b.len(), i, -1.0));
                            b.push(-bounds.l[i]);
                        }
                    }
                }
            }
        }
        let a = SparseMatrix::from_triplets(b.len(), n, &rows)?;
        let map = AffineMap::new(a, DVector::from_vec(b))?;
        let spec = ProblemSpec::new(f, self.nonsmooth_term(), map)?;
        Ok(BuiltProblem { spec, barrier_bounds, original_rows })
    }
}

fn triples(t: &[Triplet]) -> Vec<(usize, usize, f64)> {
    t.iter().map(|t| (t.i, t.j, t.v)).collect()
}

fn check_triplets(field: &str, t: &[Triplet], rows: usize, cols: usize) -> Result<(), CliError> {
    for (k, t) in t.iter().enumerate() {
        if t.i >= rows || t.j >= cols {
            return Err(CliError::Dimension(format!(
                "{field}[{k}]: index ({}, {}) outside a {rows}x{cols} matrix",
                t.i, t.j
            )));
        }
        if !t.v.is_finite() {
            return Err(CliError::Parse(format!("{field}[{k}]: value must be finite")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[objective.quadratic]
W = [{ i = 0, j = 0, v = 1.0 }]
c = [0.0]

[constraint]
type = "eq"
A = [{ i = 0, j = 0, v = 1.0 }]
b = [1.0]
"#;

    #[test]
    fn minimal_equality_document() {
        let file = ProblemFile::parse(MINIMAL).unwrap();
        let built = file.build(BoundsRoute::Constraint).unwrap();
        assert_eq!((built.spec.n, built.spec.m), (1, 1));
        assert_eq!(built.spec.g, NonsmoothTerm::ZeroIndicator);
    }

    #[test]
    fn out_of_range_triplet() {
        let text = MINIMAL.replace("A = [{ i = 0, j = 0", "A = [{ i = 0, j = 3");
        assert!(matches!(ProblemFile::parse(&text), Err(CliError::Dimension(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{MINIMAL}\n[extra]\nz = 1\n");
        assert!(matches!(ProblemFile::parse(&text), Err(CliError::Parse(_))));
        let text = MINIMAL.replace("b = [1.0]", "b = [1.0]\nweight = 2.0");
        let err = ProblemFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("weight"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ProblemFile::parse("[objective.quadratic]\nW = [\n").unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn infinite_bounds_and_routing() {
        let text = MINIMAL.replace("type = \"eq\"", "type = \"ineq\"") + "\n[bounds]\nl = [-inf]\nu = [2.0]\n";
        let file = ProblemFile::parse(&text).unwrap();
        assert!(file.has_bounds());
        let folded = file.build(BoundsRoute::Constraint).unwrap();
        assert_eq!(folded.spec.m, 2);
        assert_eq!(folded.spec.map.b[1], 2.0);
        let barrier = file.build(BoundsRoute::Barrier).unwrap();
        assert_eq!(barrier.spec.m, 1);
        assert_eq!(barrier.barrier_bounds, Some((vec![f64::NEG_INFINITY], vec![2.0])));
    }

    #[test]
    fn round_trip_through_toml() {
        let mut file = ProblemFile::parse(MINIMAL).unwrap();
        file.solution = Some(Solution { x: vec![1.0], y: vec![-1.0] });
        file.bounds = Some(Bounds { l: vec![f64::NEG_INFINITY], u: vec![0.1 + 0.2] });
        let back = ProblemFile::parse(&file.to_toml()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn named_objective() {
        let text = MINIMAL.replace(
            "[objective.quadratic]\nW = [{ i = 0, j = 0, v = 1.0 }]\nc = [0.0]",
            "[objective.named]\nname = \"logistic\"\nn = 1",
        );
        let built = ProblemFile::parse(&text).unwrap().build(BoundsRoute::Constraint).unwrap();
        assert_eq!(built.spec.f.lipschitz_modulus, Some(0.25));
    }
}
