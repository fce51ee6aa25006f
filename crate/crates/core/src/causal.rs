//! Cone machinery: decide whether a tensor is causal (nonnegative on tuples
//! of future causal vectors), locate canonical null directions, and build and
//! normalize super-energy tensors of simple p-forms.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{Frame, GeometryError, PointValue, SpacetimeModel};
use crate::opt::{angular_distance, project_gradient_descent, sphere_grid};
use crate::tensor::{unflatten, Symmetry, TensorError, TensorValue};

/// Absolute decision band after frame normalization (|T|_frame = 1).
pub const EPS_DEC: f64 = 1e-8;
/// Membership tolerance for canonical null directions (frame-normalized).
pub const EPS_MU: f64 = 1e-8;
/// Roundoff floor: normalized minima above -EPS_ROUND count as causal.
pub const EPS_ROUND: f64 = 1e-12;
/// Clustering radius for canonical direction sets (radians).
pub const DELTA_CLUSTER: f64 = 0.05;
/// Grid resolution per circle dimension (ranks 1 and 2).
pub const N_GRID: usize = 48;
/// Reduced grid resolution for rank 3 (cost grows as the cube).
pub const N_GRID_R3: usize = 16;
/// Multistart count for the optimizer.
pub const N_START: usize = 32;
/// Fraction of passing grid points that declares the full cone.
pub const FULL_CONE_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Optimize,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Causal,
    NotCausal,
    Marginal,
}

/// Outcome of a cone-membership decision. `certified_min` is the minimum of
/// the frame-normalized tensor over tuples of future null cone vectors.
#[derive(Debug, Clone, Serialize)]
pub struct CausalVerdict {
    pub decision: Decision,
    pub certified_min: f64,
    /// Chart components of the null tuple attaining the minimum.
    pub witness: Vec<Vec<f64>>,
    pub method: Method,
}

impl CausalVerdict {
    pub fn passes(&self) -> bool {
        matches!(self.decision, Decision::Causal | Decision::Marginal)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NullDirection {
    /// Frame-relative point of S^{n-2}.
    pub theta: Vec<f64>,
    /// Chart components of the corresponding null vector e_0 + theta . e.
    pub chart: Vec<f64>,
    /// Frame-normalized |T(k,...,k)| after refinement.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NullDirectionSet {
    pub full_cone: bool,
    pub members: Vec<NullDirection>,
    pub cluster_radius: f64,
    /// Set when some representatives sit closer than twice the clustering
    /// radius, i.e. distinct nearby directions may have been merged.
    pub clusters_touch: bool,
}

impl NullDirectionSet {
    pub fn full_cone() -> Self {
        NullDirectionSet {
            full_cone: true,
            members: Vec::new(),
            cluster_radius: DELTA_CLUSTER,
            clusters_touch: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CausalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("rank {0} not supported by method {1:?} (use grid up to rank 3)")]
    UnsupportedRank(usize, Method),
    #[error("tensor dimension {got} does not match model dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("canonical directions are undefined for a non-causal tensor (min {0:e})")]
    NotCausal(f64),
    #[error("form must be declared antisymmetric")]
    NotAntisymmetric,
    #[error("one-forms are linearly dependent")]
    LinearlyDependent,
    #[error("one-form {index} is not null (g^{{-1}}(k,k) = {norm:e})")]
    NotNull { index: usize, norm: f64 },
    #[error("wedge of the given null one-forms is itself null; normalization impossible")]
    DegenerateWedge,
    #[error("super-energy square is not proportional to the metric (residual {0:e})")]
    NormalizationFailed(f64),
}

/// Boundary parametrization of the future cone: k(theta) = e_0 + sum theta_i e_i.
pub fn null_cone_param(frame: &Frame, theta: &DVector<f64>) -> DVector<f64> {
    let n = frame.dim();
    assert_eq!(theta.len(), n - 1);
    let mut comps = DVector::zeros(n);
    comps[0] = 1.0;
    for i in 0..n - 1 {
        comps[i + 1] = theta[i];
    }
    frame.from_components(&comps)
}

fn frame_null(theta: &DVector<f64>) -> DVector<f64> {
    let n = theta.len() + 1;
    let mut x = DVector::zeros(n);
    x[0] = 1.0;
    for i in 0..n - 1 {
        x[i + 1] = theta[i];
    }
    x
}

/// Contract all slots except `skip` with the given frame vectors; returns the
/// free-slot vector.
fn contract_except(comps: &[f64], rank: usize, n: usize, xs: &[DVector<f64>], skip: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    let mut idx = vec![0usize; rank];
    for (flat, &c) in comps.iter().enumerate() {
        unflatten(flat, n, &mut idx);
        let mut w = c;
        for (j, x) in xs.iter().enumerate() {
            if j != skip {
                w *= x[idx[j]];
            }
        }
        out[idx[skip]] += w;
    }
    out
}

fn eval_frame(comps: &[f64], rank: usize, n: usize, xs: &[DVector<f64>]) -> f64 {
    let mut idx = vec![0usize; rank];
    let mut acc = 0.0;
    for (flat, &c) in comps.iter().enumerate() {
        unflatten(flat, n, &mut idx);
        let mut w = c;
        for (j, x) in xs.iter().enumerate() {
            w *= x[idx[j]];
        }
        acc += w;
    }
    acc
}

struct NormalizedProblem {
    frame: Frame,
    /// Frame components divided by their max magnitude.
    comps: Vec<f64>,
    rank: usize,
    dim: usize,
    scale: f64,
}

fn normalize_problem(
    m: &SpacetimeModel,
    p: &PointValue,
    t: &TensorValue,
) -> Result<NormalizedProblem, CausalError> {
    if t.dim != m.dim {
        return Err(CausalError::DimensionMismatch {
            got: t.dim,
            want: m.dim,
        });
    }
    let frame = m.orthonormal_frame(p)?;
    let tf = t.in_basis(&frame.vectors);
    let scale = tf.max_abs();
    let comps = if scale > 0.0 {
        tf.comps.iter().map(|c| c / scale).collect()
    } else {
        tf.comps.clone()
    };
    Ok(NormalizedProblem {
        frame,
        comps,
        rank: t.rank,
        dim: t.dim,
        scale,
    })
}

impl NormalizedProblem {
    fn value(&self, thetas: &[DVector<f64>]) -> f64 {
        let xs: Vec<DVector<f64>> = thetas.iter().map(frame_null).collect();
        eval_frame(&self.comps, self.rank, self.dim, &xs)
    }

    /// Euclidean gradient per sphere block (distinct argument version).
    fn grad(&self, thetas: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let xs: Vec<DVector<f64>> = thetas.iter().map(frame_null).collect();
        (0..self.rank)
            .map(|slot| {
                let v = contract_except(&self.comps, self.rank, self.dim, &xs, slot);
                DVector::from_fn(self.dim - 1, |i, _| v[i + 1])
            })
            .collect()
    }

    /// Value with all slots tied to one direction.
    fn diag_value(&self, theta: &DVector<f64>) -> f64 {
        let xs: Vec<DVector<f64>> = (0..self.rank).map(|_| frame_null(theta)).collect();
        eval_frame(&self.comps, self.rank, self.dim, &xs)
    }

    fn diag_grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let xs: Vec<DVector<f64>> = (0..self.rank).map(|_| frame_null(theta)).collect();
        let mut g = DVector::zeros(self.dim - 1);
        for slot in 0..self.rank {
            let v = contract_except(&self.comps, self.rank, self.dim, &xs, slot);
            for i in 0..self.dim - 1 {
                g[i] += v[i + 1];
            }
        }
        g
    }
}

fn grid_matrix(grid: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(grid.len(), n);
    for (r, th) in grid.iter().enumerate() {
        x[(r, 0)] = 1.0;
        for i in 0..n - 1 {
            x[(r, i + 1)] = th[i];
        }
    }
    x
}

fn decide(min: f64) -> Decision {
    if min < -EPS_DEC {
        Decision::NotCausal
    } else if min >= -EPS_ROUND {
        Decision::Causal
    } else {
        Decision::Marginal
    }
}

/// Decide T in DP+_r at a point. Checking null tuples only suffices: T is
/// multilinear and the future cone is the convex conic hull of its null
/// boundary.
pub fn is_causal_tensor(
    m: &SpacetimeModel,
    p: &PointValue,
    t: &TensorValue,
    method: Method,
) -> Result<CausalVerdict, CausalError> {
    let prob = normalize_problem(m, p, t)?;
    if prob.scale == 0.0 {
        return Ok(CausalVerdict {
            decision: Decision::Causal,
            certified_min: 0.0,
            witness: Vec::new(),
            method,
        });
    }
    let (min, thetas) = match method {
        Method::Grid => grid_minimum(&prob)?,
        Method::Optimize => optimize_minimum(&prob)?,
    };
    let witness = thetas
        .iter()
        .map(|th| null_cone_param(&prob.frame, th).iter().copied().collect())
        .collect();
    Ok(CausalVerdict {
        decision: decide(min),
        certified_min: min,
        witness,
        method,
    })
}

fn grid_minimum(prob: &NormalizedProblem) -> Result<(f64, Vec<DVector<f64>>), CausalError> {
    let n = prob.dim;
    let d = n - 1;
    match prob.rank {
        1 => {
            let grid = sphere_grid(d, N_GRID);
            let mut best = (f64::INFINITY, 0usize);
            for (i, th) in grid.iter().enumerate() {
                let v = prob.value(std::slice::from_ref(th));
                if v < best.0 {
                    best = (v, i);
                }
            }
            Ok((best.0, vec![grid[best.1].clone()]))
        }
        2 => {
            let grid = sphere_grid(d, N_GRID);
            let x = grid_matrix(&grid, n);
            let a = DMatrix::from_fn(n, n, |i, j| prob.comps[i * n + j]);
            let b = &x * a * x.transpose();
            let mut best = (f64::INFINITY, 0usize, 0usize);
            for i in 0..grid.len() {
                for j in 0..grid.len() {
                    let v = b[(i, j)];
                    if v < best.0 {
                        best = (v, i, j);
                    }
                }
            }
            Ok((best.0, vec![grid[best.1].clone(), grid[best.2].clone()]))
        }
        3 => {
            let grid = sphere_grid(d, N_GRID_R3);
            let x = grid_matrix(&grid, n);
            let mut best = (f64::INFINITY, 0usize, 0usize, 0usize);
            for (k3, th3) in grid.iter().enumerate() {
                let x3 = frame_null(th3);
                let a2 = DMatrix::from_fn(n, n, |i, j| {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += prob.comps[(i * n + j) * n + c] * x3[c];
                    }
                    acc
                });
                let b = &x * a2 * x.transpose();
                for i in 0..grid.len() {
                    for j in 0..grid.len() {
                        let v = b[(i, j)];
                        if v < best.0 {
                            best = (v, i, j, k3);
                        }
                    }
                }
            }
            Ok((
                best.0,
                vec![grid[best.1].clone(), grid[best.2].clone(), grid[best.3].clone()],
            ))
        }
        r => Err(CausalError::UnsupportedRank(r, Method::Grid)),
    }
}

fn optimize_minimum(prob: &NormalizedProblem) -> Result<(f64, Vec<DVector<f64>>), CausalError> {
    let n = prob.dim;
    let d = n - 1;
    let r = prob.rank;
    if r > 2 {
        return Err(CausalError::UnsupportedRank(r, Method::Optimize));
    }
    // coarse grid seeding
    let coarse = sphere_grid(d, 12);
    let mut seeds: Vec<(f64, Vec<DVector<f64>>)> = Vec::new();
    match r {
        1 => {
            for th in &coarse {
                let v = prob.value(std::slice::from_ref(th));
                seeds.push((v, vec![th.clone()]));
            }
        }
        2 => {
            let x = grid_matrix(&coarse, n);
            let a = DMatrix::from_fn(n, n, |i, j| prob.comps[i * n + j]);
            let b = &x * a * x.transpose();
            for i in 0..coarse.len() {
                for j in 0..coarse.len() {
                    seeds.push((b[(i, j)], vec![coarse[i].clone(), coarse[j].clone()]));
                }
            }
        }
        _ => unreachable!(),
    }
    seeds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    seeds.truncate(N_START);

    let mut best: Option<(f64, Vec<DVector<f64>>)> = None;
    for (_, start) in &seeds {
        let res = project_gradient_descent(
            start,
            |xs| prob.value(xs),
            |xs| prob.grad(xs),
            400,
        );
        if best.as_ref().map_or(true, |(v, _)| res.value < *v) {
            best = Some((res.value, res.thetas));
        }
    }
    let (v, thetas) = best.expect("at least one seed");
    Ok((v, thetas))
}

/// Canonical null directions of a causal tensor: clusters of boundary
/// directions where T(k,...,k) vanishes within tolerance; the whole cone is
/// reported via the `full_cone` flag.
pub fn canonical_null_directions(
    m: &SpacetimeModel,
    p: &PointValue,
    t: &TensorValue,
) -> Result<NullDirectionSet, CausalError> {
    let method = if t.rank <= 2 { Method::Optimize } else { Method::Grid };
    let verdict = is_causal_tensor(m, p, t, method)?;
    if verdict.decision == Decision::NotCausal {
        return Err(CausalError::NotCausal(verdict.certified_min));
    }
    let prob = normalize_problem(m, p, t)?;
    if prob.scale == 0.0 {
        return Ok(NullDirectionSet::full_cone());
    }
    let d = prob.dim - 1;
    let grid = sphere_grid(d, N_GRID);
    let mut vals: Vec<(f64, usize)> = grid
        .iter()
        .enumerate()
        .map(|(i, th)| (prob.diag_value(th), i))
        .collect();
    let pass = vals.iter().filter(|(v, _)| v.abs() <= EPS_MU).count();
    if pass as f64 >= FULL_CONE_FRACTION * grid.len() as f64 {
        return Ok(NullDirectionSet::full_cone());
    }

    // refine the best grid points toward the vanishing set
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n_seed = vals.len().min(200).max(pass);
    let mut refined: Vec<(f64, DVector<f64>)> = Vec::new();
    for &(_, i) in vals.iter().take(n_seed) {
        let res = project_gradient_descent(
            std::slice::from_ref(&grid[i]),
            |xs| prob.diag_value(&xs[0]),
            |xs| vec![prob.diag_grad(&xs[0])],
            400,
        );
        let v = res.value;
        if v.abs() <= EPS_MU {
            refined.push((v.abs(), res.thetas.into_iter().next().unwrap()));
        }
    }

    // deterministic greedy clustering: best value first, lexicographic tiebreak
    refined.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then_with(|| lex_cmp(&a.1, &b.1))
    });
    let mut members: Vec<NullDirection> = Vec::new();
    for (v, th) in &refined {
        let close = members
            .iter()
            .any(|m| angular_distance(&to_dv(&m.theta), th) <= DELTA_CLUSTER);
        if !close {
            members.push(NullDirection {
                theta: th.iter().copied().collect(),
                chart: null_cone_param(&prob.frame, th).iter().copied().collect(),
                value: *v,
            });
        }
    }
    let mut touch = false;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            if angular_distance(&to_dv(&members[i].theta), &to_dv(&members[j].theta))
                < 2.0 * DELTA_CLUSTER
            {
                touch = true;
            }
        }
    }
    Ok(NullDirectionSet {
        full_cone: false,
        members,
        cluster_radius: DELTA_CLUSTER,
        clusters_touch: touch,
    })
}

fn to_dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y).unwrap() {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Greedy maximal linearly independent subset of direction representatives,
/// chosen by descending angular separation with lexicographic tie-breaks.
/// Returns indices into `members`.
pub fn maximal_independent_subset(members: &[NullDirection]) -> Vec<usize> {
    if members.is_empty() {
        return Vec::new();
    }
    let n = members[0].chart.len();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(&to_dv(&members[a].theta), &to_dv(&members[b].theta)));
    let mut chosen: Vec<usize> = vec![order[0]];
    loop {
        let mut best: Option<(f64, usize)> = None;
        for &cand in &order {
            if chosen.contains(&cand) {
                continue;
            }
            let mind = chosen
                .iter()
                .map(|&c| angular_distance(&to_dv(&members[c].theta), &to_dv(&members[cand].theta)))
                .fold(f64::INFINITY, f64::min);
            if !rank_increases(members, &chosen, cand, n) {
                continue;
            }
            if best.map_or(true, |(bd, _)| mind > bd) {
                best = Some((mind, cand));
            }
        }
        match best {
            Some((_, cand)) => chosen.push(cand),
            None => break,
        }
        if chosen.len() == n {
            break;
        }
    }
    chosen
}

fn rank_increases(members: &[NullDirection], chosen: &[usize], cand: usize, n: usize) -> bool {
    let rows = chosen.len() + 1;
    let mut m = DMatrix::zeros(rows, n);
    for (r, &i) in chosen.iter().chain(std::iter::once(&cand)).enumerate() {
        let v = to_dv(&members[i].chart).normalize();
        for c in 0..n {
            m[(r, c)] = v[c];
        }
    }
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    // directions are only O(sqrt(eps)) accurate transversally, so rank-noise
    // leakage sits near 1e-7; the cutoff must stay well above it
    svd.singular_values.iter().filter(|&&s| s > 1e-5 * smax).count() == rows
}

/// Super-energy tensor of an antisymmetric p-form, built exactly like the
/// electromagnetic energy-momentum tensor from the Faraday 2-form.
pub fn superenergy(
    m: &SpacetimeModel,
    p: &PointValue,
    omega: &TensorValue,
) -> Result<TensorValue, CausalError> {
    if omega.rank >= 2 && omega.symmetry != Symmetry::Antisymmetric {
        return Err(CausalError::NotAntisymmetric);
    }
    let n = m.dim;
    if omega.dim != n {
        return Err(CausalError::DimensionMismatch {
            got: omega.dim,
            want: n,
        });
    }
    let g = m.metric_at(p)?;
    let ginv = g.clone().try_inverse().expect("validated metric is invertible");
    let pf = omega.rank;

    // raise the trailing p-1 indices
    let up_tail = raise_indices(omega, &ginv, 1);
    // raise all indices for the scalar invariant
    let up_all = raise_indices(omega, &ginv, 0);
    let omega2: f64 = omega
        .comps
        .iter()
        .zip(&up_all.comps)
        .map(|(a, b)| a * b)
        .sum();

    let tail = n.pow((pf - 1) as u32);
    let c_p = neg_one_pow(pf - 1) / factorial(pf - 1);
    let mut comps = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut acc = 0.0;
            for rest in 0..tail {
                acc += omega.comps[a * tail + rest] * up_tail.comps[b * tail + rest];
            }
            comps[a * n + b] = c_p * (acc - g[(a, b)] * omega2 / (2.0 * pf as f64));
        }
    }
    // symmetrize away roundoff
    for a in 0..n {
        for b in a + 1..n {
            let s = 0.5 * (comps[a * n + b] + comps[b * n + a]);
            comps[a * n + b] = s;
            comps[b * n + a] = s;
        }
    }
    Ok(TensorValue::new(2, n, comps, Symmetry::Symmetric)?)
}

/// Raise all indices from slot `from` on with the inverse metric.
fn raise_indices(t: &TensorValue, ginv: &DMatrix<f64>, from: usize) -> TensorValue {
    let n = t.dim;
    let mut cur = t.clone();
    for slot in from..t.rank {
        let mut out = TensorValue::zeros(t.rank, n, Symmetry::None);
        let mut idx = vec![0usize; t.rank];
        for flat in 0..cur.comps.len() {
            unflatten(flat, n, &mut idx);
            let mut acc = 0.0;
            let mut jdx = idx.clone();
            for c in 0..n {
                jdx[slot] = c;
                acc += cur.comps[crate::tensor::flatten(&jdx, n)] * ginv[(idx[slot], c)];
            }
            out.comps[flat] = acc;
        }
        cur = out;
    }
    cur.symmetry = t.symmetry;
    cur
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn neg_one_pow(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// All permutations of 0..r paired with their parity sign.
fn signed_permutations_with_parity(r: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, rest: &[usize], out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for (i, &x) in rest.iter().enumerate() {
            prefix.push(x);
            let mut next: Vec<usize> = rest.to_vec();
            next.remove(i);
            rec(prefix, &next, out);
            prefix.pop();
        }
    }
    let mut perms = Vec::new();
    rec(&mut Vec::new(), &(0..r).collect::<Vec<_>>(), &mut perms);
    perms
        .into_iter()
        .map(|p| {
            let mut sign = 1.0;
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    if p[i] > p[j] {
                        sign = -sign;
                    }
                }
            }
            (p, sign)
        })
        .collect()
}

/// Wedge product of 1-forms: (k_1 ^ ... ^ k_r)_{a_1..a_r} with unit weight.
pub fn wedge(one_forms: &[DVector<f64>]) -> TensorValue {
    let r = one_forms.len();
    let n = one_forms[0].len();
    let mut out = TensorValue::zeros(r, n, if r >= 2 { Symmetry::Antisymmetric } else { Symmetry::None });
    let perms = signed_permutations_with_parity(r);
    let mut idx = vec![0usize; r];
    for flat in 0..out.comps.len() {
        unflatten(flat, n, &mut idx);
        let mut acc = 0.0;
        for (perm, sign) in &perms {
            let mut w = *sign;
            for (slot, &which) in perm.iter().enumerate() {
                w *= one_forms[which][idx[slot]];
            }
            acc += w;
        }
        out.comps[flat] = acc;
    }
    out
}

/// Scalar invariant Omega . Omega (all indices raised).
pub fn form_square(m: &SpacetimeModel, p: &PointValue, omega: &TensorValue) -> Result<f64, CausalError> {
    let g = m.metric_at(p)?;
    let ginv = g.try_inverse().expect("validated metric is invertible");
    let up = raise_indices(omega, &ginv, 0);
    Ok(omega.comps.iter().zip(&up.comps).map(|(a, b)| a * b).sum())
}

/// Build the normalized simple form and its normalized super-energy tensor
/// from null future 1-forms: for r > 1 the wedge is rescaled so that
/// Omega . Omega = 2 r! (-1)^{r-1}, giving S with S_a^p S_pb = g_ab; the
/// degenerate r = 1 case returns S = k (x) k.
pub fn normalize_simple_form(
    m: &SpacetimeModel,
    p: &PointValue,
    one_forms: &[DVector<f64>],
) -> Result<(TensorValue, TensorValue), CausalError> {
    let r = one_forms.len();
    let n = m.dim;
    let g = m.metric_at(p)?;
    let ginv = g.clone().try_inverse().expect("validated metric is invertible");

    for (i, k) in one_forms.iter().enumerate() {
        let q = (k.transpose() * &ginv * k)[(0, 0)];
        let scale = k.norm_squared().max(1e-300);
        if q.abs() > 1e-8 * scale {
            return Err(CausalError::NotNull { index: i, norm: q });
        }
    }
    // linear independence
    let mut mat = DMatrix::zeros(r, n);
    for (row, k) in one_forms.iter().enumerate() {
        for c in 0..n {
            mat[(row, c)] = k[c];
        }
    }
    let svd = mat.svd(false, false);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count() < r {
        return Err(CausalError::LinearlyDependent);
    }

    if r == 1 {
        let k = &one_forms[0];
        let omega = TensorValue::new(1, n, k.iter().copied().collect(), Symmetry::None)?;
        let s = TensorValue::outer(&[k, k]);
        let mut s = s;
        s.symmetry = Symmetry::Symmetric;
        return Ok((omega, s));
    }

    let raw = wedge(one_forms);
    let sq = form_square(m, p, &raw)?;
    let target = 2.0 * factorial(r) * neg_one_pow(r - 1);
    if sq.abs() < 1e-14 * raw.max_abs().powi(2).max(1e-300) {
        return Err(CausalError::DegenerateWedge);
    }
    if sq * target < 0.0 {
        return Err(CausalError::DegenerateWedge);
    }
    let omega = raw.scale((target / sq).sqrt());

    let t = superenergy(m, p, &omega)?;
    // S = T / sqrt(t) where T g^{-1} T = t g
    let tm = t.to_matrix();
    let t2 = &tm * &ginv * &tm;
    // extract the proportionality factor against the largest metric component
    let mut amax = (0, 0);
    for a in 0..n {
        for b in 0..n {
            if g[(a, b)].abs() > g[amax].abs() {
                amax = (a, b);
            }
        }
    }
    let factor = t2[amax] / g[amax];
    let coarse = (&t2 - factor * &g).amax();
    let scale = t2.amax().max(1.0);
    if factor <= 0.0 || coarse > 1e-4 * scale {
        return Err(CausalError::NormalizationFailed(coarse));
    }
    let mut sm = tm.scale(1.0 / factor.sqrt());
    // The input directions carry O(sqrt(eps)) transverse error because the
    // cone objective is quadratically flat on its vanishing set; polish S to
    // an exact g-involution with the matrix sign iteration on g^{-1} S
    // (g-self-adjointness is preserved, so symmetry survives).
    let mut a = &ginv * &sm;
    for _ in 0..8 {
        let Some(ainv) = a.clone().try_inverse() else {
            break;
        };
        let next = (&a + &ainv) * 0.5;
        if (&next - &a).amax() < 1e-15 * a.amax().max(1.0) {
            a = next;
            break;
        }
        a = next;
    }
    sm = &g * &a;
    sm = (&sm + &sm.transpose()) * 0.5;
    let s2 = &sm * &ginv * &sm;
    let resid = (&s2 - &g).amax();
    if resid > 1e-8 * g.amax().max(1.0) {
        return Err(CausalError::NormalizationFailed(resid));
    }
    let mut s = TensorValue::from_matrix(&sm, Symmetry::Symmetric);
    // orient S future: positive on the timelike frame leg
    let frame = m.orthonormal_frame(p)?;
    let e0 = &frame.vectors[0];
    if s.apply(&[e0, e0]) < 0.0 {
        s = s.scale(-1.0);
    }
    Ok((omega, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprs::Bindings;
    use crate::spacetimes;

    fn minkowski4() -> SpacetimeModel {
        spacetimes::builtin("minkowski4", &Bindings::new()).unwrap().model
    }

    fn origin() -> PointValue {
        PointValue::new(vec![0.0; 4])
    }

    fn metric_tensor(m: &SpacetimeModel, p: &PointValue) -> TensorValue {
        TensorValue::from_matrix(&m.metric_at(p).unwrap(), Symmetry::Symmetric)
    }

    #[test]
    fn null_cone_param_gives_null_future_vectors() {
        let m = minkowski4();
        let p = origin();
        let frame = m.orthonormal_frame(&p).unwrap();
        let theta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let k = null_cone_param(&frame, &theta);
        assert!((k - DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn metric_is_causal_both_methods() {
        let m = minkowski4();
        let p = origin();
        let t = metric_tensor(&m, &p);
        for method in [Method::Optimize, Method::Grid] {
            let v = is_causal_tensor(&m, &p, &t, method).unwrap();
            assert!(v.passes(), "{:?}: {:?}", method, v.decision);
            assert!(v.certified_min.abs() < 1e-9, "min {}", v.certified_min);
        }
    }

    #[test]
    fn negated_metric_is_not_causal_with_witness() {
        let m = minkowski4();
        let p = origin();
        let t = metric_tensor(&m, &p).scale(-1.0);
        let v = is_causal_tensor(&m, &p, &t, Method::Optimize).unwrap();
        assert_eq!(v.decision, Decision::NotCausal);
        assert!(v.certified_min < -1.0);
        // witness pair must be non-parallel null vectors
        let k1 = DVector::from_row_slice(&v.witness[0]);
        let k2 = DVector::from_row_slice(&v.witness[1]);
        let cross = k1.normalize().dot(&k2.normalize());
        assert!(cross < 0.99);
    }

    #[test]
    fn null_outer_square_is_causal_with_zero_min() {
        let m = minkowski4();
        let p = origin();
        let k = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]); // k-flat for k=(1,1,0,0)
        let mut t = TensorValue::outer(&[&k, &k]);
        t.symmetry = Symmetry::Symmetric;
        let v = is_causal_tensor(&m, &p, &t, Method::Optimize).unwrap();
        assert!(v.passes());
        assert!(v.certified_min.abs() < 1e-9);
    }

    #[test]
    fn mu_of_metric_is_full_cone() {
        let m = minkowski4();
        let p = origin();
        let t = metric_tensor(&m, &p);
        let mu = canonical_null_directions(&m, &p, &t).unwrap();
        assert!(mu.full_cone);
    }

    #[test]
    fn mu_of_null_square_is_single_direction() {
        let m = minkowski4();
        let p = origin();
        let kb = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let mut t = TensorValue::outer(&[&kb, &kb]);
        t.symmetry = Symmetry::Symmetric;
        let mu = canonical_null_directions(&m, &p, &t).unwrap();
        assert!(!mu.full_cone);
        assert_eq!(mu.members.len(), 1);
        let k = to_dv(&mu.members[0].chart).normalize();
        let expect = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]).normalize();
        assert!((k - expect).norm() < 1e-5);
    }

    #[test]
    fn mu_undefined_for_noncausal() {
        let m = minkowski4();
        let p = origin();
        let t = metric_tensor(&m, &p).scale(-1.0);
        assert!(matches!(
            canonical_null_directions(&m, &p, &t),
            Err(CausalError::NotCausal(_))
        ));
    }

    #[test]
    fn superenergy_of_null_one_form_is_outer_square() {
        let m = minkowski4();
        let p = origin();
        let kb = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let omega = TensorValue::new(1, 4, kb.iter().copied().collect(), Symmetry::None).unwrap();
        let t = superenergy(&m, &p, &omega).unwrap();
        let expect = TensorValue::outer(&[&kb, &kb]);
        for (a, b) in t.comps.iter().zip(&expect.comps) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn superenergy_of_em_two_form_is_causal_and_traceless() {
        let m = minkowski4();
        let p = origin();
        // Omega = dt ^ dx
        let dt = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let dx = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let omega = wedge(&[&dt, &dx].map(|v| v.clone()));
        let t = superenergy(&m, &p, &omega).unwrap();
        let v = is_causal_tensor(&m, &p, &t, Method::Grid).unwrap();
        assert!(v.passes());
        // trace with the inverse metric vanishes in n = 4
        let g = m.metric_at(&p).unwrap();
        let ginv = g.try_inverse().unwrap();
        let tm = t.to_matrix();
        let trace = (ginv * tm).trace();
        assert!(trace.abs() < 1e-12, "trace {}", trace);
    }

    #[test]
    fn superenergy_of_top_form_is_proportional_to_metric() {
        let m = minkowski4();
        let p = origin();
        let forms: Vec<DVector<f64>> = (0..4)
            .map(|i| DVector::from_fn(4, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let omega = wedge(&forms);
        let t = superenergy(&m, &p, &omega).unwrap();
        let g = m.metric_at(&p).unwrap();
        let lam = t.comps[0] / g[(0, 0)];
        for a in 0..4 {
            for b in 0..4 {
                assert!((t.get(&[a, b]) - lam * g[(a, b)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn normalize_two_form_square_law() {
        let m = minkowski4();
        let p = origin();
        // lowered null forms for k1=(1,1,0,0), k2=(1,-1,0,0)
        let k1 = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let k2 = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        let (omega, s) = normalize_simple_form(&m, &p, &[k1, k2]).unwrap();
        let sq = form_square(&m, &p, &omega).unwrap();
        assert!((sq + 4.0).abs() < 1e-10, "Omega.Omega = {}", sq);
        let g = m.metric_at(&p).unwrap();
        let ginv = g.clone().try_inverse().unwrap();
        let sm = s.to_matrix();
        let s2 = &sm * ginv * &sm;
        assert!((s2 - g).amax() < 1e-10);
    }

    #[test]
    fn normalize_degenerate_r1() {
        let m = minkowski4();
        let p = origin();
        let kb = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let (_, s) = normalize_simple_form(&m, &p, &[kb]).unwrap();
        let g = m.metric_at(&p).unwrap();
        let ginv = g.try_inverse().unwrap();
        let sm = s.to_matrix();
        let s2 = &sm * ginv * &sm;
        assert!(s2.amax() < 1e-12);
    }

    #[test]
    fn normalize_rejects_dependent_forms() {
        let m = minkowski4();
        let p = origin();
        let k = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let k2 = &k * 2.0;
        assert!(matches!(
            normalize_simple_form(&m, &p, &[k, k2]),
            Err(CausalError::LinearlyDependent)
        ));
    }

    #[test]
    fn cone_closed_under_sums() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let m = minkowski4();
        let p = origin();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let t1 = random_causal(&mut rng);
            let t2 = random_causal(&mut rng);
            let a: f64 = rng.gen_range(0.0..2.0);
            let b: f64 = rng.gen_range(0.0..2.0);
            let sum = t1.scale(a).add(&t2.scale(b));
            let v = is_causal_tensor(&m, &p, &sum, Method::Optimize).unwrap();
            assert!(v.passes(), "sum of causal tensors must be causal: {:?}", v.decision);
        }
    }

    fn random_causal(rng: &mut impl rand::Rng) -> TensorValue {
        // sum of outer squares of lowered null future vectors
        let mut t = TensorValue::zeros(2, 4, Symmetry::Symmetric);
        for _ in 0..3 {
            let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = (theta.iter().map(|x| x * x).sum::<f64>()).sqrt().max(1e-9);
            let kb = DVector::from_vec(vec![
                1.0,
                -theta[0] / norm,
                -theta[1] / norm,
                -theta[2] / norm,
            ]);
            let a: f64 = rng.gen_range(0.0..1.0);
            t = t.add(&TensorValue::outer(&[&kb, &kb]).scale(a));
        }
        t.symmetry = Symmetry::Symmetric;
        t
    }
}
