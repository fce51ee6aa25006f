//! Deterministic grids on unit spheres and projected gradient descent on
//! products of spheres. Smooth low-dimensional problems only; gradients are
//! supplied exactly by the caller.

use nalgebra::DVector;

/// Deterministic grid of unit vectors in R^d (the sphere S^{d-1}).
/// `n` is the resolution per circle dimension.
pub fn sphere_grid(d: usize, n: usize) -> Vec<DVector<f64>> {
    assert!(d >= 1);
    match d {
        1 => vec![
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![-1.0]),
        ],
        2 => (0..n)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                DVector::from_vec(vec![phi.cos(), phi.sin()])
            })
            .collect(),
        _ => {
            // polar angle against the last axis, recursive equator grid
            let k = (n / 2).max(2);
            let mut out = Vec::new();
            let mut pole = DVector::zeros(d);
            pole[d - 1] = 1.0;
            out.push(pole.clone());
            out.push(-pole);
            let equator = sphere_grid(d - 1, n);
            for i in 1..k {
                let psi = std::f64::consts::PI * i as f64 / k as f64;
                let (s, c) = (psi.sin(), psi.cos());
                for w in &equator {
                    let mut v = DVector::zeros(d);
                    for a in 0..d - 1 {
                        v[a] = s * w[a];
                    }
                    v[d - 1] = c;
                    out.push(v);
                }
            }
            out
        }
    }
}

/// Great-circle distance between unit vectors.
pub fn angular_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

pub struct DescentResult {
    pub thetas: Vec<DVector<f64>>,
    pub value: f64,
    pub iterations: usize,
}

/// Projected gradient descent with Armijo backtracking on a product of unit
/// spheres. `f` evaluates the objective, `grad` its full Euclidean gradient
/// per sphere block; the tangential projection happens here.
pub fn project_gradient_descent<F, G>(
    start: &[DVector<f64>],
    f: F,
    grad: G,
    max_iter: usize,
) -> DescentResult
where
    F: Fn(&[DVector<f64>]) -> f64,
    G: Fn(&[DVector<f64>]) -> Vec<DVector<f64>>,
{
    let mut thetas: Vec<DVector<f64>> = start.iter().map(|t| t.normalize()).collect();
    let mut fval = f(&thetas);
    let mut step = 0.5f64;
    let mut iters = 0;
    for it in 0..max_iter {
        iters = it + 1;
        let mut g = grad(&thetas);
        let mut gnorm2 = 0.0;
        for (gi, ti) in g.iter_mut().zip(&thetas) {
            let along = gi.dot(ti);
            *gi -= along * ti;
            gnorm2 += gi.norm_squared();
        }
        if gnorm2 < 1e-28 {
            break;
        }
        // backtracking line search along the projected direction
        let mut t = step;
        let mut accepted = false;
        for _ in 0..50 {
            let cand: Vec<DVector<f64>> = thetas
                .iter()
                .zip(&g)
                .map(|(ti, gi)| (ti - t * gi).normalize())
                .collect();
            let fc = f(&cand);
            if fc <= fval - 1e-1 * t * gnorm2 {
                thetas = cand;
                fval = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        // mild step adaptation keeps progress without re-tuning
        step = (t * 2.0).min(1.0);
        if t * gnorm2.sqrt() < 1e-16 {
            break;
        }
    }
    DescentResult {
        thetas,
        value: fval,
        iterations: iters,
    }
}
