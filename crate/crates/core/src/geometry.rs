//! Charts, metric fields, pointwise orthonormal frames and causal
//! classification of vectors: the arena (V, g) with its time orientation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::exprs::{Bindings, Expr, ExprError};

/// Relative tolerance for deciding a vector is null (frame-normalized).
pub const EPS_NULL: f64 = 1e-9;
/// Tolerance on frame orthonormality residuals.
pub const EPS_FRAME: f64 = 1e-10;
/// Pivot threshold for dropping linearly dependent Gram-Schmidt candidates.
pub const PIVOT: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("expression error: {0}")]
    Expr(#[from] ExprError),
    #[error("metric at point is not Lorentzian (+,-,...,-): {0}")]
    Signature(String),
    #[error("orientation field is spacelike at sampled point (g(u,u) = {0})")]
    SpacelikeOrientation(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot classify the zero vector")]
    ZeroVector,
    #[error("frame construction failed: {0}")]
    Frame(String),
}

/// A chart with metric component expressions and a declared future-pointing
/// causal orientation field.
#[derive(Debug, Clone)]
pub struct SpacetimeModel {
    pub name: String,
    pub dim: usize,
    pub coords: Vec<String>,
    /// Symmetric n x n table of component expressions.
    pub metric: Vec<Vec<Expr>>,
    /// Declared future-pointing causal field, chart components.
    pub orientation: Vec<Expr>,
    /// Default values for free parameters appearing in component expressions.
    pub defaults: Bindings,
}

/// A chart point plus free-parameter bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct PointValue {
    pub coords: Vec<f64>,
    pub params: Bindings,
}

impl PointValue {
    pub fn new(coords: Vec<f64>) -> Self {
        PointValue {
            coords,
            params: Bindings::new(),
        }
    }

    pub fn with_params(coords: Vec<f64>, params: Bindings) -> Self {
        PointValue { coords, params }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CausalClass {
    Timelike,
    Null,
    Spacelike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeOrientation {
    Future,
    Past,
    NotApplicable,
}

/// Pointwise orthonormal frame e_0..e_{n-1} with g(e_0,e_0)=1 and
/// g(e_i,e_i)=-1, e_0 future-directed against the model orientation field.
#[derive(Debug, Clone)]
pub struct Frame {
    /// Chart components, one column per frame vector, e_0 first.
    pub vectors: Vec<DVector<f64>>,
    /// Metric matrix at the frame's base point.
    pub metric: DMatrix<f64>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// g(u, v) with the metric at the base point.
    pub fn ip(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.metric * v)[(0, 0)]
    }

    /// Frame components a of v: v = a_0 e_0 + sum_i a_i e_i.
    pub fn components(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut a = DVector::zeros(n);
        a[0] = self.ip(v, &self.vectors[0]);
        for i in 1..n {
            a[i] = -self.ip(v, &self.vectors[i]);
        }
        a
    }

    /// Chart components of the vector with the given frame components.
    pub fn from_components(&self, a: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(n);
        for i in 0..n {
            v += a[i] * &self.vectors[i];
        }
        v
    }
}

impl SpacetimeModel {
    pub fn bindings(&self, p: &PointValue) -> Bindings {
        let mut b = self.defaults.clone();
        for (name, val) in &p.params {
            b.insert(name.clone(), *val);
        }
        for (name, val) in self.coords.iter().zip(&p.coords) {
            b.insert(name.clone(), *val);
        }
        b
    }

    /// Numeric metric matrix at `p`, symmetrized and signature-validated.
    pub fn metric_at(&self, p: &PointValue) -> Result<DMatrix<f64>, GeometryError> {
        if p.coords.len() != self.dim {
            return Err(GeometryError::Dimension {
                expected: self.dim,
                got: p.coords.len(),
            });
        }
        let b = self.bindings(p);
        let n = self.dim;
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = self.metric[i][j].eval(&b)?;
            }
        }
        // symmetrize (config stores lower triangle; expressions must agree)
        let g = (&g + g.transpose()) * 0.5;
        self.check_signature(&g)?;
        Ok(g)
    }

    fn check_signature(&self, g: &DMatrix<f64>) -> Result<(), GeometryError> {
        let eig = g.clone().symmetric_eigen();
        let scale = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &l| m.max(l.abs()))
            .max(1e-300);
        let tol = scale * 1e-12;
        let mut pos = 0;
        let mut negc = 0;
        for &l in eig.eigenvalues.iter() {
            if l > tol {
                pos += 1;
            } else if l < -tol {
                negc += 1;
            } else {
                return Err(GeometryError::Signature(format!(
                    "degenerate eigenvalue {:e}",
                    l
                )));
            }
        }
        if pos != 1 || negc != self.dim - 1 {
            return Err(GeometryError::Signature(format!(
                "{} positive / {} negative eigenvalues in dimension {}",
                pos, negc, self.dim
            )));
        }
        Ok(())
    }

    pub fn orientation_at(&self, p: &PointValue) -> Result<DVector<f64>, GeometryError> {
        let b = self.bindings(p);
        let mut u = DVector::zeros(self.dim);
        for (i, e) in self.orientation.iter().enumerate() {
            u[i] = e.eval(&b)?;
        }
        Ok(u)
    }

    /// Deterministic orthonormal frame at `p`: Lorentzian Gram-Schmidt seeded
    /// with the orientation field, then the chart basis in order, skipping
    /// candidates whose residual norm falls under the pivot threshold. If the
    /// sweep stalls (null candidates), falls back to the eigenframe of the
    /// metric matrix.
    pub fn orthonormal_frame(&self, p: &PointValue) -> Result<Frame, GeometryError> {
        let g = self.metric_at(p)?;
        let u0 = self.orientation_at(p)?;
        let n = self.dim;
        let unorm = (u0.transpose() * &g * &u0)[(0, 0)];
        let uscale = u0.norm_squared().max(1e-300);
        if unorm / uscale < -EPS_NULL {
            return Err(GeometryError::SpacelikeOrientation(unorm));
        }

        let ip = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * &g * v)[(0, 0)];

        let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(n + 1);
        candidates.push(u0.clone());
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            candidates.push(e);
        }

        let mut accepted: Vec<(DVector<f64>, f64)> = Vec::new(); // (vector, sign)
        for cand in &candidates {
            if accepted.len() == n {
                break;
            }
            let mut w = cand.clone();
            for (e, sign) in &accepted {
                let c = ip(&w, e) / sign;
                w -= c * e;
            }
            let nu = ip(&w, &w);
            let scale = w.norm_squared().max(1e-300);
            if nu.abs() / scale <= PIVOT {
                continue;
            }
            let e = &w / nu.abs().sqrt();
            accepted.push((e, nu.signum()));
        }

        let mut frame: Vec<DVector<f64>>;
        if accepted.len() == n && accepted.iter().filter(|(_, s)| *s > 0.0).count() == 1 {
            let tpos = accepted.iter().position(|(_, s)| *s > 0.0).unwrap();
            frame = Vec::with_capacity(n);
            frame.push(accepted[tpos].0.clone());
            for (i, (e, _)) in accepted.iter().enumerate() {
                if i != tpos {
                    frame.push(e.clone());
                }
            }
        } else {
            // Eigenframe fallback for points where chart basis vectors are
            // null (e.g. Vaidya at the horizon).
            frame = self.eigenframe(&g)?;
        }

        // Future-orient e_0 against the declared orientation field. For a null
        // orientation field g(u0, e_0) is still nonzero since e_0 is timelike.
        let t = ip(&u0, &frame[0]);
        if t < 0.0 {
            frame[0] = -&frame[0];
        } else if t == 0.0 {
            return Err(GeometryError::Frame(
                "orientation field orthogonal to timelike frame leg".into(),
            ));
        }
        Ok(Frame {
            vectors: frame,
            metric: g,
        })
    }

    fn eigenframe(&self, g: &DMatrix<f64>) -> Result<Vec<DVector<f64>>, GeometryError> {
        let n = self.dim;
        let eig = g.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        // timelike (positive eigenvalue) leg first, then by eigenvalue
        order.sort_by(|&a, &b| {
            let (la, lb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
            lb.partial_cmp(&la).unwrap()
        });
        let mut frame = Vec::with_capacity(n);
        for &idx in &order {
            let lam = eig.eigenvalues[idx];
            if lam == 0.0 {
                return Err(GeometryError::Signature("zero eigenvalue".into()));
            }
            let mut v: DVector<f64> = eig.eigenvectors.column(idx).into();
            // deterministic sign: largest-magnitude component positive
            let mut kmax = 0;
            for k in 1..n {
                if v[k].abs() > v[kmax].abs() {
                    kmax = k;
                }
            }
            if v[kmax] < 0.0 {
                v = -v;
            }
            frame.push(&v / (lam.abs().sqrt() * v.norm()));
        }
        Ok(frame)
    }

    /// Causal class and time orientation of a chart vector at `p`.
    pub fn classify_vector(
        &self,
        p: &PointValue,
        v: &DVector<f64>,
    ) -> Result<(CausalClass, TimeOrientation), GeometryError> {
        if v.iter().all(|&x| x == 0.0) {
            return Err(GeometryError::ZeroVector);
        }
        let frame = self.orthonormal_frame(p)?;
        let comps = frame.components(v);
        let scale = comps.norm_squared().max(1e-300);
        let vv = frame.ip(v, v);
        let class = if vv.abs() <= EPS_NULL * scale {
            CausalClass::Null
        } else if vv > 0.0 {
            CausalClass::Timelike
        } else {
            CausalClass::Spacelike
        };
        if class == CausalClass::Spacelike {
            return Ok((class, TimeOrientation::NotApplicable));
        }
        let u0 = self.orientation_at(p)?;
        let dot = frame.ip(&u0, v);
        let u0scale = frame.components(&u0).norm() * comps.norm();
        let orient = if dot > EPS_NULL * u0scale {
            TimeOrientation::Future
        } else if dot < -EPS_NULL * u0scale {
            TimeOrientation::Past
        } else {
            // causal and g-orthogonal to a causal orientation field: v is
            // parallel to a null u0; the sign of the Euclidean overlap decides
            if u0.dot(v) > 0.0 {
                TimeOrientation::Future
            } else {
                TimeOrientation::Past
            }
        };
        Ok((class, orient))
    }
}
