//! Diffeomorphisms, pullbacks, and the pointwise causal-relation and
//! conformal-characterization tests.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::causal::{
    canonical_null_directions, is_causal_tensor, CausalError, CausalVerdict, Method,
};
use crate::exprs::{Bindings, Expr, ExprError};
use crate::geometry::{GeometryError, PointValue, SpacetimeModel};
use crate::tensor::{unflatten, Symmetry, TensorError, TensorField, TensorValue};

/// Componentwise tolerance for the direct conformal proportionality test.
pub const EPS_CONFORMAL: f64 = 1e-8;
/// Jacobian determinant floor.
pub const JACOBIAN_PIVOT: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RelationError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("jacobian is singular at sampled point (|det| = {0:e})")]
    SingularJacobian(f64),
    #[error("map has {got} target coordinates, model has dimension {want}")]
    Dimension { got: usize, want: usize },
    #[error("empty sample")]
    EmptySample,
}

/// Coordinate map between charts, with an auto-derived symbolic Jacobian.
#[derive(Debug, Clone)]
pub struct DiffeoMap {
    /// Target coordinates as expressions in source coordinates (+ parameters).
    pub target_exprs: Vec<Expr>,
    /// J[i][j] = d target_i / d source_j.
    pub jacobian: Vec<Vec<Expr>>,
    /// Optional closed-form inverse, target coords -> source coords.
    pub inverse: Option<Vec<Expr>>,
    pub params: Bindings,
}

impl DiffeoMap {
    pub fn new(target_exprs: Vec<Expr>, source_coords: &[String]) -> Self {
        let jacobian = target_exprs
            .iter()
            .map(|e| source_coords.iter().map(|c| e.diff(c)).collect())
            .collect();
        DiffeoMap {
            target_exprs,
            jacobian,
            inverse: None,
            params: Bindings::new(),
        }
    }

    pub fn identity(source_coords: &[String]) -> Self {
        let exprs = source_coords.iter().map(|c| Expr::var(c)).collect();
        let mut m = DiffeoMap::new(exprs, source_coords);
        m.inverse = Some(source_coords.iter().map(|c| Expr::var(c)).collect());
        m
    }

    pub fn with_params(mut self, params: Bindings) -> Self {
        self.params = params;
        self
    }

    fn bindings(&self, source: &SpacetimeModel, p: &PointValue) -> Bindings {
        let mut b = source.bindings(p);
        // map parameters win over model defaults and point parameters, but
        // never shadow a coordinate
        for (k, v) in &self.params {
            if !source.coords.contains(k) {
                b.insert(k.clone(), *v);
            }
        }
        b
    }

    /// Image point phi(p), carrying parameter bindings along.
    pub fn apply(&self, source: &SpacetimeModel, p: &PointValue) -> Result<PointValue, RelationError> {
        let b = self.bindings(source, p);
        let mut coords = Vec::with_capacity(self.target_exprs.len());
        for e in &self.target_exprs {
            coords.push(e.eval(&b)?);
        }
        // map parameters (like a flow parameter) stay with the map: carrying
        // them into the image point would leak into later compositions
        Ok(PointValue::with_params(coords, p.params.clone()))
    }

    pub fn jacobian_at(&self, source: &SpacetimeModel, p: &PointValue) -> Result<DMatrix<f64>, RelationError> {
        let b = self.bindings(source, p);
        let n = self.target_exprs.len();
        let mut j = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..source.coords.len() {
                j[(r, c)] = self.jacobian[r][c].eval(&b)?;
            }
        }
        let det = j.determinant();
        if det.abs() <= JACOBIAN_PIVOT {
            return Err(RelationError::SingularJacobian(det.abs()));
        }
        Ok(j)
    }

    /// Pushforward of a chart vector at p to a chart vector at phi(p).
    pub fn pushforward(
        &self,
        source: &SpacetimeModel,
        p: &PointValue,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>, RelationError> {
        Ok(self.jacobian_at(source, p)? * v)
    }
}

/// (phi* g~)_ab = J^c_a J^d_b g~_cd(phi(p)).
pub fn pullback_metric(
    map: &DiffeoMap,
    source: &SpacetimeModel,
    target: &SpacetimeModel,
    p: &PointValue,
) -> Result<DMatrix<f64>, RelationError> {
    let q = map.apply(source, p)?;
    let j = map.jacobian_at(source, p)?;
    let gt = target.metric_at(&q)?;
    Ok(j.transpose() * gt * j)
}

/// Pullback of a rank-r covariant expression field on the target.
pub fn pullback_tensor(
    map: &DiffeoMap,
    source: &SpacetimeModel,
    target: &SpacetimeModel,
    p: &PointValue,
    field: &TensorField,
) -> Result<TensorValue, RelationError> {
    let q = map.apply(source, p)?;
    let j = map.jacobian_at(source, p)?;
    let tv = field.eval(&target.bindings(&q))?;
    let n = tv.dim;
    let mut out = TensorValue::zeros(tv.rank, n, tv.symmetry);
    let mut idx = vec![0usize; tv.rank];
    let mut jdx = vec![0usize; tv.rank];
    for flat in 0..out.comps.len() {
        unflatten(flat, n, &mut idx);
        let mut acc = 0.0;
        for src_flat in 0..tv.comps.len() {
            unflatten(src_flat, n, &mut jdx);
            let mut w = tv.comps[src_flat];
            for s in 0..tv.rank {
                w *= j[(jdx[s], idx[s])];
            }
            acc += w;
        }
        out.comps[flat] = acc;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RelationDecision {
    CausalRelation,
    NotCausalRelation,
    Conformal,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointOutcome {
    pub coords: Vec<f64>,
    pub verdict: CausalVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationVerdict {
    pub decision: RelationDecision,
    pub per_point: Vec<PointOutcome>,
    /// Conformal factor samples when the proportionality test applies.
    pub conformal_factors: Vec<f64>,
    pub anomalies: Vec<String>,
}

/// Theorem-1 style test: V <_phi W iff phi* g~ is a causal tensor, certified
/// on the supplied sample points.
pub fn is_causal_relation(
    map: &DiffeoMap,
    source: &SpacetimeModel,
    target: &SpacetimeModel,
    sample: &[PointValue],
    method: Method,
) -> Result<RelationVerdict, RelationError> {
    if sample.is_empty() {
        return Err(RelationError::EmptySample);
    }
    let mut per_point = Vec::with_capacity(sample.len());
    let mut decision = RelationDecision::CausalRelation;
    for p in sample {
        let pb = pullback_metric(map, source, target, p)?;
        let t = TensorValue::from_matrix(&pb, Symmetry::Symmetric);
        let verdict = is_causal_tensor(source, p, &t, method)?;
        if !verdict.passes() {
            decision = RelationDecision::NotCausalRelation;
        }
        per_point.push(PointOutcome {
            coords: p.coords.clone(),
            verdict,
        });
        if decision == RelationDecision::NotCausalRelation {
            break; // failing point and witness recorded
        }
    }
    Ok(RelationVerdict {
        decision,
        per_point,
        conformal_factors: Vec::new(),
        anomalies: Vec::new(),
    })
}

/// Theorem-2 style test, running both characterizations independently:
/// (a) phi* g~ = alpha g with alpha > 0 componentwise, and (b) the canonical
/// directions of phi* g~ fill the whole null cone. Discrepancies between the
/// two are reported as anomalies.
pub fn is_conformal(
    map: &DiffeoMap,
    source: &SpacetimeModel,
    target: &SpacetimeModel,
    sample: &[PointValue],
    method: Method,
) -> Result<RelationVerdict, RelationError> {
    if sample.is_empty() {
        return Err(RelationError::EmptySample);
    }
    let mut per_point = Vec::with_capacity(sample.len());
    let mut factors = Vec::with_capacity(sample.len());
    let mut anomalies = Vec::new();
    let mut direct_ok = true;
    let mut full_cone_ok = true;
    for p in sample {
        let pb = pullback_metric(map, source, target, p)?;
        let g = source.metric_at(p)?;
        // factor from the largest-magnitude metric component, then residual
        // checked against every component
        let mut amax = (0, 0);
        for a in 0..g.nrows() {
            for b in 0..g.ncols() {
                if g[(a, b)].abs() > g[amax].abs() {
                    amax = (a, b);
                }
            }
        }
        let alpha = pb[amax] / g[amax];
        let scale = pb.amax().max(g.amax());
        let resid = (&pb - alpha * &g).amax();
        if !(alpha > 0.0) || resid > EPS_CONFORMAL * scale {
            direct_ok = false;
        } else {
            factors.push(alpha);
        }
        let t = TensorValue::from_matrix(&pb, Symmetry::Symmetric);
        let verdict = is_causal_tensor(source, p, &t, method)?;
        if verdict.passes() {
            let mu = canonical_null_directions(source, p, &t)?;
            if !mu.full_cone {
                full_cone_ok = false;
            }
        } else {
            full_cone_ok = false;
        }
        per_point.push(PointOutcome {
            coords: p.coords.clone(),
            verdict,
        });
    }
    if direct_ok != full_cone_ok {
        anomalies.push(format!(
            "conformal tests disagree: proportionality={}, full-cone={}",
            direct_ok, full_cone_ok
        ));
    }
    let decision = if direct_ok {
        RelationDecision::Conformal
    } else {
        RelationDecision::NotCausalRelation
    };
    Ok(RelationVerdict {
        decision,
        per_point,
        conformal_factors: factors,
        anomalies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetimes;

    fn minkowski4() -> SpacetimeModel {
        spacetimes::builtin("minkowski4", &Bindings::new()).unwrap().model
    }

    fn vaidya() -> SpacetimeModel {
        spacetimes::builtin("vaidya", &Bindings::new()).unwrap().model
    }

    fn dilation(m: &SpacetimeModel) -> DiffeoMap {
        let exprs = m
            .coords
            .iter()
            .map(|c| Expr::parse(&format!("2*{}", c)).unwrap())
            .collect();
        DiffeoMap::new(exprs, &m.coords)
    }

    #[test]
    fn identity_pullback_returns_metric() {
        let m = vaidya();
        let p = PointValue::new(vec![0.4, 5.0, 1.2, 0.3]);
        let map = DiffeoMap::identity(&m.coords);
        let pb = pullback_metric(&map, &m, &m, &p).unwrap();
        let g = m.metric_at(&p).unwrap();
        assert!((pb - g).amax() < 1e-12);
    }

    #[test]
    fn dilation_pullback_scales_metric_by_four() {
        let m = minkowski4();
        let p = PointValue::new(vec![0.1, 0.2, 0.3, 0.4]);
        let map = dilation(&m);
        let pb = pullback_metric(&map, &m, &m, &p).unwrap();
        let g = m.metric_at(&p).unwrap();
        assert!((pb - 4.0 * g).amax() < 1e-12);
    }

    #[test]
    fn vaidya_shift_pullback_closed_form() {
        let m = vaidya();
        let s = 1.0;
        let map = spacetimes::builtin("vaidya", &Bindings::new())
            .unwrap()
            .flow
            .unwrap()
            .at(s);
        let p = PointValue::new(vec![0.4, 5.0, 1.2, 0.3]);
        let pb = pullback_metric(&map, &m, &m, &p).unwrap();
        let g = m.metric_at(&p).unwrap();
        let (t, r) = (p.coords[0], p.coords[1]);
        let extra = 2.0 * ((-t as f64).exp() - (-(t + s)).exp()) / r;
        let mut want = g;
        want[(0, 0)] += extra;
        assert!((pb - want).amax() < 1e-9);
    }

    #[test]
    fn rank1_dilation_pullback_doubles() {
        let m = minkowski4();
        let p = PointValue::new(vec![0.0; 4]);
        let map = dilation(&m);
        let mut dt = TensorField::zeros(1, 4, Symmetry::None);
        dt.set(&[0], Expr::constant(1.0));
        let pulled = pullback_tensor(&map, &m, &m, &p, &dt).unwrap();
        assert!((pulled.comps[0] - 2.0).abs() < 1e-14);
        assert!(pulled.comps[1..].iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn rank3_shift_pullback_stays_causal() {
        // With the orientation field d_r (null), the future cone contains
        // d_r and -d_t, so the future-causal time differential is -dt; its
        // third tensor power pulls back to itself under the shift and must
        // pass the cone test. (+dt fails it under this same orientation.)
        let m = vaidya();
        let map = spacetimes::builtin("vaidya", &Bindings::new())
            .unwrap()
            .flow
            .unwrap()
            .at(0.7);
        let p = PointValue::new(vec![0.4, 5.0, 1.2, 0.3]);
        let mut comps = vec![Expr::Const(0.0); 64];
        comps[0] = Expr::Const(-1.0); // (-dt)(x)(-dt)(x)(-dt): (t,t,t) slot is -1
        let field = TensorField {
            rank: 3,
            dim: 4,
            comps,
            symmetry: Symmetry::None,
        };
        // (-dt)(x)(-dt)(x)(-dt) has component (-1)^3 = -1 at (t,t,t)
        let pulled = pullback_tensor(&map, &m, &m, &p, &field).unwrap();
        let v = crate::causal::is_causal_tensor(&m, &p, &pulled, crate::causal::Method::Grid)
            .unwrap();
        assert!(v.passes(), "min {}", v.certified_min);
        // and the positively oriented dt fails, confirming the orientation
        let mut plus = vec![Expr::Const(0.0); 64];
        plus[0] = Expr::Const(1.0);
        let field = TensorField {
            rank: 3,
            dim: 4,
            comps: plus,
            symmetry: Symmetry::None,
        };
        let pulled = pullback_tensor(&map, &m, &m, &p, &field).unwrap();
        let v = crate::causal::is_causal_tensor(&m, &p, &pulled, crate::causal::Method::Grid)
            .unwrap();
        assert!(!v.passes());
    }

    #[test]
    fn singular_jacobian_rejected() {
        let m = minkowski4();
        let p = PointValue::new(vec![0.0; 4]);
        let exprs = vec![
            Expr::parse("t").unwrap(),
            Expr::parse("t").unwrap(),
            Expr::parse("y").unwrap(),
            Expr::parse("z").unwrap(),
        ];
        let map = DiffeoMap::new(exprs, &m.coords);
        assert!(matches!(
            map.jacobian_at(&m, &p),
            Err(RelationError::SingularJacobian(_))
        ));
    }

    #[test]
    fn identity_is_conformal_with_unit_factor() {
        let m = vaidya();
        let sample = vec![
            PointValue::new(vec![0.4, 5.0, 1.2, 0.3]),
            PointValue::new(vec![1.1, 7.0, 0.8, 2.0]),
        ];
        let map = DiffeoMap::identity(&m.coords);
        let v = is_conformal(&map, &m, &m, &sample, Method::Optimize).unwrap();
        assert_eq!(v.decision, RelationDecision::Conformal);
        assert!(v.anomalies.is_empty());
        for a in &v.conformal_factors {
            assert!((a - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dilation_is_conformal_alpha_four() {
        let m = minkowski4();
        let sample = vec![PointValue::new(vec![0.1, -0.2, 0.5, 0.9])];
        let v = is_conformal(&dilation(&m), &m, &m, &sample, Method::Optimize).unwrap();
        assert_eq!(v.decision, RelationDecision::Conformal);
        assert!((v.conformal_factors[0] - 4.0).abs() < 1e-10);
        assert!(v.anomalies.is_empty());
    }

    #[test]
    fn vaidya_shift_not_conformal_no_anomaly() {
        let fx = spacetimes::builtin("vaidya", &Bindings::new()).unwrap();
        let m = fx.model;
        let map = fx.flow.unwrap().at(1.0);
        let sample = vec![PointValue::new(vec![0.4, 5.0, 1.2, 0.3])];
        let v = is_conformal(&map, &m, &m, &sample, Method::Optimize).unwrap();
        assert_ne!(v.decision, RelationDecision::Conformal);
        assert!(v.anomalies.is_empty(), "anomalies: {:?}", v.anomalies);
    }

    #[test]
    fn empty_sample_rejected() {
        let m = minkowski4();
        let map = DiffeoMap::identity(&m.coords);
        assert!(matches!(
            is_causal_relation(&map, &m, &m, &[], Method::Optimize),
            Err(RelationError::EmptySample)
        ));
    }
}
