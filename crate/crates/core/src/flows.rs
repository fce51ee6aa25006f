//! One-parameter families of diffeomorphisms: submonoid verification,
//! invariant null directions, simple-form scaling, and the pushforward
//! identity for canonical directions of pulled-back causal tensors.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::causal::{
    canonical_null_directions, maximal_independent_subset, normalize_simple_form, CausalError,
    NullDirectionSet, Method, DELTA_CLUSTER,
};
use crate::geometry::{GeometryError, PointValue, SpacetimeModel};
use crate::opt::angular_distance;
use crate::relations::{
    is_causal_relation, pullback_metric, DiffeoMap, RelationDecision, RelationError,
    RelationVerdict,
};
use crate::tensor::{unflatten, Symmetry, TensorField, TensorValue};

/// Residual bound for the phi_0 = identity check.
pub const EPS_IDENTITY: f64 = 1e-12;
/// Residual bound for the group property phi_s o phi_t = phi_{s+t}.
pub const EPS_GROUP: f64 = 1e-9;
/// Relative residual for form-scaling proportionality.
pub const EPS_SCALING: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("phi_0 is not the identity (residual {0:e})")]
    NotIdentityAtZero(f64),
    #[error("group property violated (residual {0:e})")]
    GroupPropertyViolated(f64),
    #[error("no canonical null directions available to build the simple form")]
    NoDirections,
    #[error("s-grid is empty or has no positive entries")]
    BadSGrid,
}

/// A coordinate map whose expressions carry a flow parameter, defining the
/// local one-parameter family phi_s.
#[derive(Debug, Clone)]
pub struct FlowFamily {
    pub map: DiffeoMap,
    /// Name of the flow parameter inside the map expressions.
    pub param: String,
    /// Parameter interval, containing 0.
    pub interval: (f64, f64),
    /// Whether phi_{s+t} = phi_s o phi_t is expected to hold.
    pub group: bool,
}

impl FlowFamily {
    /// The member phi_s as a concrete map.
    pub fn at(&self, s: f64) -> DiffeoMap {
        let mut map = self.map.clone();
        map.params.insert(self.param.clone(), s);
        map
    }

    /// Validates phi_0 = id and, when flagged, the group property on a few
    /// (s, t) pairs, at the given sample points.
    pub fn validate(&self, model: &SpacetimeModel, sample: &[PointValue]) -> Result<(), FlowError> {
        for p in sample {
            let q = self.at(0.0).apply(model, p)?;
            let resid = p
                .coords
                .iter()
                .zip(&q.coords)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if resid > EPS_IDENTITY {
                return Err(FlowError::NotIdentityAtZero(resid));
            }
        }
        if self.group {
            let pairs = [(0.3, 0.7), (0.5, 0.5), (1.0, 0.25)];
            for p in sample {
                for (s, t) in pairs {
                    let a = self.at(s).apply(model, &self.at(t).apply(model, p)?)?;
                    let b = self.at(s + t).apply(model, p)?;
                    let resid = a
                        .coords
                        .iter()
                        .zip(&b.coords)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0f64, f64::max);
                    if resid > EPS_GROUP {
                        return Err(FlowError::GroupPropertyViolated(resid));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct FlowReport {
    pub per_s: Vec<(f64, RelationDecision)>,
    pub verdicts: Vec<(f64, RelationVerdict)>,
    /// Persistence anomaly: small-s members causal but some larger s failing,
    /// indicating either numerics or a family that is not a local group.
    pub anomalies: Vec<String>,
}

impl FlowReport {
    pub fn all_causal(&self) -> bool {
        self.per_s
            .iter()
            .all(|(_, d)| *d != RelationDecision::NotCausalRelation)
    }
}

/// Per-s causal verdicts over the sample, with the persistence cross-check:
/// if the members nearest s = 0 pass, every positive grid member must pass.
pub fn check_submonoid(
    flow: &FlowFamily,
    model: &SpacetimeModel,
    s_grid: &[f64],
    sample: &[PointValue],
    method: Method,
) -> Result<FlowReport, FlowError> {
    if s_grid.is_empty() {
        return Err(FlowError::BadSGrid);
    }
    flow.validate(model, sample)?;
    let mut per_s = Vec::new();
    let mut verdicts = Vec::new();
    for &s in s_grid {
        let v = is_causal_relation(&flow.at(s), model, model, sample, method)?;
        per_s.push((s, v.decision));
        verdicts.push((s, v));
    }
    let mut anomalies = Vec::new();
    let positives: Vec<&(f64, RelationDecision)> =
        per_s.iter().filter(|(s, _)| *s > 0.0).collect();
    if let Some(smallest) = positives
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
    {
        if smallest.1 != RelationDecision::NotCausalRelation {
            for (s, d) in &positives {
                if *d == RelationDecision::NotCausalRelation {
                    anomalies.push(format!(
                        "persistence violated: s = {} fails while s = {} passes",
                        s, smallest.0
                    ));
                }
            }
        }
    }
    Ok(FlowReport {
        per_s,
        verdicts,
        anomalies,
    })
}

/// True when the two direction sets coincide within the clustering radius.
pub fn sets_match(a: &NullDirectionSet, b: &NullDirectionSet) -> bool {
    if a.full_cone || b.full_cone {
        return a.full_cone == b.full_cone;
    }
    let covered = |xs: &NullDirectionSet, ys: &NullDirectionSet| {
        xs.members.iter().all(|x| {
            ys.members.iter().any(|y| {
                angular_distance(
                    &DVector::from_row_slice(&x.theta),
                    &DVector::from_row_slice(&y.theta),
                ) <= DELTA_CLUSTER
            })
        })
    };
    covered(a, b) && covered(b, a)
}

#[derive(Debug, Serialize)]
pub struct FlowDirections {
    /// Canonical direction sets per s at the first sample point.
    pub per_s: Vec<(f64, NullDirectionSet)>,
    /// Whether the sets agree pairwise across s at every sample point.
    pub s_independent: bool,
}

/// mu(phi_s) = mu(phi*_s g) per grid member, with the s-independence check.
pub fn flow_null_directions(
    flow: &FlowFamily,
    model: &SpacetimeModel,
    s_grid: &[f64],
    sample: &[PointValue],
) -> Result<FlowDirections, FlowError> {
    let positives: Vec<f64> = s_grid.iter().copied().filter(|s| *s > 0.0).collect();
    if positives.is_empty() || sample.is_empty() {
        return Err(FlowError::BadSGrid);
    }
    let mut independent = true;
    let mut first_point = Vec::new();
    for (pi, p) in sample.iter().enumerate() {
        let mut sets = Vec::new();
        for &s in &positives {
            let pb = pullback_metric(&flow.at(s), model, model, p)?;
            let t = TensorValue::from_matrix(&pb, Symmetry::Symmetric);
            sets.push((s, canonical_null_directions(model, p, &t)?));
        }
        for w in sets.windows(2) {
            if !sets_match(&w[0].1, &w[1].1) {
                independent = false;
            }
        }
        if pi == 0 {
            first_point = sets;
        }
    }
    Ok(FlowDirections {
        per_s: first_point,
        s_independent: independent,
    })
}

/// Pullback of a numeric covariant tensor value living at phi(p).
pub fn pullback_value(
    map: &DiffeoMap,
    model: &SpacetimeModel,
    p: &PointValue,
    t_at_image: &TensorValue,
) -> Result<TensorValue, FlowError> {
    let j = map.jacobian_at(model, p)?;
    let n = t_at_image.dim;
    let mut out = TensorValue::zeros(t_at_image.rank, n, t_at_image.symmetry);
    let mut idx = vec![0usize; t_at_image.rank];
    let mut jdx = vec![0usize; t_at_image.rank];
    for flat in 0..out.comps.len() {
        unflatten(flat, n, &mut idx);
        let mut acc = 0.0;
        for src in 0..t_at_image.comps.len() {
            unflatten(src, n, &mut jdx);
            let mut w = t_at_image.comps[src];
            for s in 0..t_at_image.rank {
                w *= j[(jdx[s], idx[s])];
            }
            acc += w;
        }
        out.comps[flat] = acc;
    }
    Ok(out)
}

/// The normalized simple form built from a maximal independent subset of the
/// flow's canonical directions at `p` (for the member phi_s).
pub fn flow_simple_form(
    flow: &FlowFamily,
    model: &SpacetimeModel,
    s: f64,
    p: &PointValue,
) -> Result<(TensorValue, TensorValue, usize), FlowError> {
    let pb = pullback_metric(&flow.at(s), model, model, p)?;
    let t = TensorValue::from_matrix(&pb, Symmetry::Symmetric);
    let mu = canonical_null_directions(model, p, &t)?;
    if mu.full_cone || mu.members.is_empty() {
        return Err(FlowError::NoDirections);
    }
    let chosen = maximal_independent_subset(&mu.members);
    let g = model.metric_at(p)?;
    let lowered: Vec<DVector<f64>> = chosen
        .iter()
        .map(|&i| &g * DVector::from_row_slice(&mu.members[i].chart))
        .collect();
    let (omega, s_tensor) = normalize_simple_form(model, p, &lowered)?;
    Ok((omega, s_tensor, chosen.len()))
}

#[derive(Debug, Serialize)]
pub struct FormScaling {
    /// Intrinsic number of independent canonical directions.
    pub rank: usize,
    /// (s, sample index, sigma_s at that point).
    pub sigma: Vec<(f64, usize, f64)>,
    pub anomalies: Vec<String>,
}

/// Verifies phi*_s Omega = sigma_s Omega componentwise and samples sigma_s.
pub fn check_form_scaling(
    flow: &FlowFamily,
    model: &SpacetimeModel,
    s_grid: &[f64],
    sample: &[PointValue],
) -> Result<FormScaling, FlowError> {
    let positives: Vec<f64> = s_grid.iter().copied().filter(|s| *s > 0.0).collect();
    if positives.is_empty() || sample.is_empty() {
        return Err(FlowError::BadSGrid);
    }
    let mut sigma = Vec::new();
    let mut anomalies = Vec::new();
    let mut rank = 0;
    for &s in &positives {
        for (pi, p) in sample.iter().enumerate() {
            let (omega_p, _, r) = flow_simple_form(flow, model, s, p)?;
            rank = r;
            let q = flow.at(s).apply(model, p)?;
            let (omega_q, _, _) = flow_simple_form(flow, model, s, &q)?;
            let pulled = pullback_value(&flow.at(s), model, p, &omega_q)?;
            // proportionality factor from the largest component of Omega(p)
            let mut amax = 0;
            for (i, c) in omega_p.comps.iter().enumerate() {
                if c.abs() > omega_p.comps[amax].abs() {
                    amax = i;
                }
            }
            let factor = pulled.comps[amax] / omega_p.comps[amax];
            let scale = omega_p.max_abs().max(pulled.max_abs());
            let resid = pulled
                .comps
                .iter()
                .zip(&omega_p.comps)
                .map(|(a, b)| (a - factor * b).abs())
                .fold(0.0f64, f64::max);
            if resid > EPS_SCALING * scale {
                anomalies.push(format!(
                    "pullback of Omega not proportional at s = {}, point {} (residual {:e})",
                    s, pi, resid
                ));
            } else {
                sigma.push((s, pi, factor));
            }
        }
    }
    Ok(FormScaling {
        rank,
        sigma,
        anomalies,
    })
}

#[derive(Debug, Serialize)]
pub struct Prop1Outcome {
    /// Pushforwards of mu(phi*_s T) land inside mu(T) intersect mu(phi_s).
    pub forward_included: bool,
    /// The intersection is covered by the pushforwards.
    pub backward_included: bool,
    pub pushed_count: usize,
    pub intersection_count: Option<usize>,
}

impl Prop1Outcome {
    pub fn holds(&self) -> bool {
        self.forward_included && self.backward_included
    }
}

/// Checks phi'_s(mu(phi*_s T)) = mu(T) intersect mu(phi_s) at `p`, both
/// inclusions separately, for a causal tensor field T on the model.
pub fn check_prop1(
    flow: &FlowFamily,
    model: &SpacetimeModel,
    field: &TensorField,
    s: f64,
    p: &PointValue,
) -> Result<Prop1Outcome, FlowError> {
    let map = flow.at(s);
    let pulled = crate::relations::pullback_tensor(&map, model, model, p, field)?;
    let mu_pulled = canonical_null_directions(model, p, &pulled)?;
    let q = map.apply(model, p)?;

    // directions at the image point, as theta vectors in the frame at q
    let frame_q = model.orthonormal_frame(&q)?;
    let theta_at_q = |v_chart: &DVector<f64>| -> Option<DVector<f64>> {
        let a = frame_q.components(v_chart);
        if a[0] <= 0.0 {
            return None;
        }
        let th = DVector::from_fn(a.len() - 1, |i, _| a[i + 1] / a[0]);
        Some(th.normalize())
    };

    let pushed: Vec<DVector<f64>> = if mu_pulled.full_cone {
        Vec::new()
    } else {
        mu_pulled
            .members
            .iter()
            .filter_map(|m| {
                let v = map
                    .pushforward(model, p, &DVector::from_row_slice(&m.chart))
                    .ok()?;
                theta_at_q(&v)
            })
            .collect()
    };

    let t_at_q = field.eval(&model.bindings(&q))?;
    let mu_t = canonical_null_directions(model, &q, &t_at_q)?;
    let pb = pullback_metric(&map, model, model, &q)?;
    let mu_flow =
        canonical_null_directions(model, &q, &TensorValue::from_matrix(&pb, Symmetry::Symmetric))?;

    // intersection mu(T) n mu(phi_s), with full-cone absorbing
    let inter: Option<Vec<DVector<f64>>> = match (mu_t.full_cone, mu_flow.full_cone) {
        (true, true) => None, // whole cone
        (true, false) => Some(
            mu_flow
                .members
                .iter()
                .map(|m| DVector::from_row_slice(&m.theta))
                .collect(),
        ),
        (false, true) => Some(
            mu_t.members
                .iter()
                .map(|m| DVector::from_row_slice(&m.theta))
                .collect(),
        ),
        (false, false) => Some(
            mu_t.members
                .iter()
                .filter(|a| {
                    mu_flow.members.iter().any(|b| {
                        angular_distance(
                            &DVector::from_row_slice(&a.theta),
                            &DVector::from_row_slice(&b.theta),
                        ) <= DELTA_CLUSTER
                    })
                })
                .map(|m| DVector::from_row_slice(&m.theta))
                .collect(),
        ),
    };

    let (forward, backward, icount) = match inter {
        None => {
            // intersection is the whole cone: forward inclusion trivial,
            // backward holds only if the pulled set is also the whole cone
            (true, mu_pulled.full_cone, None)
        }
        Some(ref set) => {
            let fwd = pushed
                .iter()
                .all(|x| set.iter().any(|y| angular_distance(x, y) <= DELTA_CLUSTER));
            let bwd = set
                .iter()
                .all(|y| pushed.iter().any(|x| angular_distance(x, y) <= DELTA_CLUSTER));
            (fwd, bwd, Some(set.len()))
        }
    };
    Ok(Prop1Outcome {
        forward_included: forward,
        backward_included: backward,
        pushed_count: pushed.len(),
        intersection_count: icount,
    })
}

/// Central-difference derivative (d/ds)|_0 of phi*_s g at `p`; the oracle for
/// the symbolic Lie derivative of the metric.
pub fn flow_metric_derivative(
    flow: &FlowFamily,
    model: &SpacetimeModel,
    p: &PointValue,
    h: f64,
) -> Result<TensorValue, FlowError> {
    let plus = pullback_metric(&flow.at(h), model, model, p)?;
    let minus = pullback_metric(&flow.at(-h), model, model, p)?;
    let d = (plus - minus) / (2.0 * h);
    Ok(TensorValue::from_matrix(&d, Symmetry::Symmetric))
}
