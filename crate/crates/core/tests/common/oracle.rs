//! Slow, simple reference computations. Nothing here calls the solver code
//! paths it is used to check: log-determinants go through LU, rates are
//! recomputed from scratch, optima come from grids plus derivative-free
//! polishing.
#![allow(dead_code)]

use bcopt_core::linalg::{CMat, CVec, C64};
use bcopt_core::minimax::QuadraticForm;
use bcopt_core::{ChannelSet, ConstraintSet, SolverOutput, WeightVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct FiniteDiffSpec {
    pub step: f64,
}

impl Default for FiniteDiffSpec {
    fn default() -> Self {
        Self { step: 1e-6 }
    }
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], spec: FiniteDiffSpec) -> Result<Vec<f64>, String> {
    assert!(spec.step > 0.0);
    let mut out = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = spec.step * x[i].abs().max(1.0);
        y[i] = x[i] + h;
        let up = f(&y);
        y[i] = x[i] - h;
        let down = f(&y);
        y[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(format!("non-finite sample at coordinate {i}"));
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Central-difference Jacobian; `out[i][j] = d f_i / d x_j`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], spec: FiniteDiffSpec) -> Result<Vec<Vec<f64>>, String> {
    let n_out = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; n_out];
    let mut y = x.to_vec();
    for j in 0..x.len() {
        let h = spec.step * x[j].abs().max(1.0);
        y[j] = x[j] + h;
        let up = f(&y);
        y[j] = x[j] - h;
        let down = f(&y);
        y[j] = x[j];
        for i in 0..n_out {
            if !up[i].is_finite() || !down[i].is_finite() {
                return Err(format!("non-finite sample at coordinate {j}"));
            }
            jac[i][j] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `log |A|` through an LU determinant.
pub fn log_det(a: &CMat) -> f64 {
    let d = a.clone().lu().determinant();
    assert!(d.re > 0.0 && d.im.abs() <= 1e-9 * d.re, "determinant {d} of a matrix that should be HPD");
    d.re.ln()
}

/// Dual-MAC weighted rate for the broadcast encoding order `order`: the
/// uplink decodes in the reverse order, so `order[pos]` is interfered by
/// `order[..pos]`.
pub fn mac_value(channels: &[CVec], noise: &CMat, w: &[f64], order: &[usize], p: &[f64]) -> f64 {
    let mut acc = noise.clone();
    let mut prev = log_det(&acc);
    let mut total = 0.0;
    for &k in order {
        acc += &channels[k] * channels[k].adjoint() * C64::new(p[k], 0.0);
        let cur = log_det(&acc);
        total += w[k] * (cur - prev);
        prev = cur;
    }
    total
}

/// Maximizes `f` over `{p >= 0, sum p <= budget}` by an exhaustive grid
/// followed by compass search along coordinate and exchange directions.
pub fn simplex_max(f: impl Fn(&[f64]) -> f64, k: usize, budget: f64, resolution: usize) -> (Vec<f64>, f64) {
    let mut best = (vec![0.0; k], f(&vec![0.0; k]));
    let mut idx = vec![0usize; k];
    loop {
        let used: usize = idx.iter().sum();
        if used <= resolution {
            let p: Vec<f64> = idx.iter().map(|&i| budget * i as f64 / resolution as f64).collect();
            let v = f(&p);
            if v > best.1 {
                best = (p, v);
            }
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return compass(f, best, budget, budget / resolution as f64);
            }
            idx[pos] += 1;
            if idx[pos] <= resolution {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn compass(f: impl Fn(&[f64]) -> f64, start: (Vec<f64>, f64), budget: f64, mut h: f64) -> (Vec<f64>, f64) {
    let k = start.0.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; k];
            d[i] = s;
            dirs.push(d);
        }
        for j in 0..k {
            if i != j {
                let mut d = vec![0.0; k];
                d[i] = 1.0;
                d[j] = -1.0;
                dirs.push(d);
            }
        }
    }
    let (mut x, mut fx) = start;
    while h > 1e-13 * budget.max(1.0) {
        let mut improved = false;
        for d in &dirs {
            let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + h * b).collect();
            if y.iter().any(|v| *v < 0.0) || y.iter().sum::<f64>() > budget {
                continue;
            }
            let fy = f(&y);
            if fy > fx {
                x = y;
                fx = fy;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, fx)
}

/// `Sigma_z = sum lambda_l Phi_l` and budget `sum lambda_l gamma_l`.
pub fn dual_mac_data(cs: &ConstraintSet, lambda: &[f64]) -> (CMat, f64) {
    let m = cs.antennas().unwrap();
    let mut noise = CMat::zeros(m, m);
    let mut budget = 0.0;
    for (c, l) in cs.constraints().iter().zip(lambda) {
        noise += &c.phi * C64::new(*l, 0.0);
        budget += l * c.budget;
    }
    (noise, budget)
}

/// Dual-MAC value at `lambda` for a fixed encoding order (grid + polish).
/// By uplink-downlink duality it upper-bounds the broadcast weighted rate
/// achievable with that order.
pub fn order_value(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, lambda: &[f64], order: &[usize]) -> f64 {
    let (noise, budget) = dual_mac_data(cs, lambda);
    let channels = ch.columns();
    simplex_max(|p| mac_value(&channels, &noise, w.values(), order, p), ch.users(), budget, 24).1
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out
}

/// Evaluates every encoding order at the dual point returned by `solver`
/// and returns all `(order, value)` pairs plus the index of the best.
pub fn enumerate_orders(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    solver: impl Fn(&ChannelSet, &ConstraintSet, &WeightVector) -> SolverOutput,
) -> (Vec<(Vec<usize>, f64)>, usize) {
    assert!(ch.users() <= 4);
    let out = solver(ch, cs, w);
    let values: Vec<(Vec<usize>, f64)> =
        permutations(ch.users()).into_iter().map(|o| {
            let v = order_value(ch, cs, w, &out.lambda, &o);
            (o, v)
        }).collect();
    let best = (0..values.len()).max_by(|&a, &b| values[a].1.total_cmp(&values[b].1)).unwrap();
    (values, best)
}

/// Best `q` for `max sum w_k log(1 + gain_k q_k)` subject to `C q <= 1`,
/// `q >= 0`, for `K <= 3`. The objective increases in every `q_k`, so the
/// last power is the largest feasible one; the others are gridded with
/// step `resolution` (relative to their individual caps), then polished by
/// coordinate golden-section search.
pub fn grid_waterfill(gains: &[f64], w: &[f64], c: &[Vec<f64>], resolution: f64) -> Vec<f64> {
    let k = gains.len();
    assert!((1..=3).contains(&k));
    let cap = |j: usize, q: &[f64]| -> f64 {
        c.iter()
            .map(|row| {
                let used: f64 = (0..k).filter(|&i| i != j).map(|i| row[i] * q[i]).sum();
                if row[j] > 0.0 {
                    ((1.0 - used) / row[j]).max(0.0)
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    let value = |q: &[f64]| -> f64 { (0..k).map(|i| w[i] * (gains[i] * q[i]).ln_1p()).sum() };
    let complete = |q: &mut Vec<f64>| -> bool {
        q[k - 1] = 0.0;
        let feasible = c.iter().all(|row| (0..k - 1).map(|i| row[i] * q[i]).sum::<f64>() <= 1.0 + 1e-15);
        q[k - 1] = cap(k - 1, q);
        feasible
    };
    let solo: Vec<f64> = (0..k).map(|j| cap(j, &vec![0.0; k])).collect();
    let steps = (1.0 / resolution).round() as usize;
    let mut best = (vec![0.0; k], f64::NEG_INFINITY);
    let free = k - 1;
    let total = (steps + 1).pow(free as u32);
    for n in 0..total {
        let mut q = vec![0.0; k];
        let mut r = n;
        for (i, qi) in q.iter_mut().enumerate().take(free) {
            *qi = solo[i] * (r % (steps + 1)) as f64 / steps as f64;
            r /= steps + 1;
        }
        if complete(&mut q) {
            let v = value(&q);
            if v > best.1 {
                best = (q, v);
            }
        }
    }
    let mut q = best.0;
    for _ in 0..50 {
        for i in 0..free {
            let hi = {
                let mut probe = q.clone();
                probe[i] = 0.0;
                probe[k - 1] = 0.0;
                cap(i, &probe)
            };
            let line = |x: f64| -> f64 {
                let mut y = q.clone();
                y[i] = x;
                if complete(&mut y) {
                    value(&y)
                } else {
                    f64::NEG_INFINITY
                }
            };
            let (mut a, mut b) = (0.0, hi);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let x1 = b - phi * (b - a);
                let x2 = a + phi * (b - a);
                if line(x1) < line(x2) {
                    a = x1;
                } else {
                    b = x2;
                }
            }
            q[i] = 0.5 * (a + b);
            complete(&mut q);
        }
    }
    q
}

/// Zero-forcing / linear-beamforming rates straight from the SINR formula.
pub fn linear_rates(ch: &ChannelSet, t: &CMat) -> Vec<f64> {
    let k = ch.users();
    (0..k)
        .map(|i| {
            let h = ch.column(i);
            let gain = |j: usize| -> f64 { h.dotc(&t.column(j)).norm_sqr() };
            let interference: f64 = (0..k).filter(|&j| j != i).map(gain).sum();
            (1.0 + gain(i) / (1.0 + interference)).ln()
        })
        .collect()
}

/// `u_l = sum_k t_k^H Phi_l t_k` from the precoder columns.
pub fn precoder_usage(cs: &ConstraintSet, t: &CMat) -> Vec<f64> {
    cs.constraints()
        .iter()
        .map(|c| (0..t.ncols()).map(|k| t.column(k).dotc(&(&c.phi * t.column(k))).re).sum())
        .collect()
}

fn form_eval(f: &QuadraticForm, x: &[f64]) -> f64 {
    let n = x.len();
    let mut v = f.constant;
    for i in 0..n {
        v += 2.0 * f.linear[i] * x[i];
        for j in 0..n {
            v += x[i] * f.kernel[(i, j)] * x[j];
        }
    }
    v
}

/// `min_x sum theta_l f_l(x)`.
pub fn dual_value(forms: &[QuadraticForm], theta: &[f64]) -> f64 {
    let n = forms[0].dim();
    let mut p = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut l = nalgebra::DVector::<f64>::zeros(n);
    let mut c = 0.0;
    for (f, t) in forms.iter().zip(theta) {
        p += &f.kernel * *t;
        l += &f.linear * *t;
        c += f.constant * t;
    }
    // unbounded below unless l lies in the range of p
    let scale = p.amax().max(1.0);
    let Ok(x) = p.clone().svd(true, true).solve(&l, 1e-12 * scale) else { return f64::NEG_INFINITY };
    if (&p * &x - &l).amax() > 1e-9 * (1.0 + l.amax()) {
        return f64::NEG_INFINITY;
    }
    c - l.dot(&x)
}

/// Optimal value of `min_x max_l f_l(x)` for three forms, as the maximum of
/// the concave dual over the 2-simplex: grid with step `1/res`, then
/// compass polish.
pub fn minimax_dual_oracle(forms: &[QuadraticForm], res: usize) -> f64 {
    assert_eq!(forms.len(), 3);
    let f = |t: &[f64]| -> f64 {
        let theta = [t[0], t[1], 1.0 - t[0] - t[1]];
        if theta.iter().any(|x| *x < 0.0) {
            return f64::NEG_INFINITY;
        }
        dual_value(forms, &theta)
    };
    simplex_max(f, 2, 1.0, res).1
}

/// Coarse primal check: `max_l f_l` minimized over a box grid followed by
/// compass search (an upper bound on the optimum).
pub fn minimax_primal_grid(forms: &[QuadraticForm], radius: f64, points: usize) -> f64 {
    let n = forms[0].dim();
    let g = |x: &[f64]| forms.iter().map(|f| form_eval(f, x)).fold(f64::NEG_INFINITY, f64::max);
    let mut best = (vec![0.0; n], g(&vec![0.0; n]));
    let total = points.pow(n as u32);
    let mut x = vec![0.0; n];
    for idx in 0..total {
        let mut r = idx;
        for xi in x.iter_mut() {
            *xi = -radius + 2.0 * radius * (r % points) as f64 / (points - 1) as f64;
            r /= points;
        }
        let v = g(&x);
        if v < best.1 {
            best = (x.clone(), v);
        }
    }
    let (mut x, mut fx) = best;
    let mut h = 2.0 * radius / (points - 1) as f64;
    while h > 1e-11 {
        let mut improved = false;
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += s * h;
                let fy = g(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    fx
}

/// Admissible dual point: log-uniform entries in `[1e-2, 1e1]`.
pub fn sample_lambda(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    (0..l).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect()
}

/// DPC rates from scratch: `order[pos]` sees the covariance of the users
/// encoded after it as interference.
pub fn dpc_rates(ch: &ChannelSet, v: &CMat, q: &[f64], order: &[usize]) -> Vec<f64> {
    let m = ch.antennas();
    let mut rates = vec![0.0; q.len()];
    for (pos, &k) in order.iter().enumerate() {
        let mut interference = CMat::zeros(m, m);
        for &j in &order[pos + 1..] {
            interference += v.column(j) * v.column(j).adjoint() * C64::new(q[j], 0.0);
        }
        let h = ch.column(k);
        let signal = h.dotc(&v.column(k)).norm_sqr() * q[k];
        let noise = 1.0 + h.dotc(&(&interference * &h)).re;
        rates[k] = (1.0 + signal / noise).ln();
    }
    rates
}
