#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Central finite differences of `f` at `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a − n| / max(|a|, |n|, 1e-7)`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-7))
        .fold(0.0, f64::max)
}

pub fn random_etas(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.02..0.98)).collect()
}

/// `−ln v` without clamping; only used on `v` well inside `(0, 1)`.
pub fn nll(v: f64) -> f64 {
    -v.ln()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Estimated negative-class risk `mean_U[−ln(1−η̂)] − π·mean_P[−ln(1−η̂)]`,
/// written out independently of the library.
pub fn nnpu_inner(p: &[f64], u: &[f64], pi: f64) -> f64 {
    let up: Vec<f64> = u.iter().map(|&e| nll(1.0 - e)).collect();
    let pp: Vec<f64> = p.iter().map(|&e| nll(1.0 - e)).collect();
    mean(&up) - pi * mean(&pp)
}

type Oracle<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

pub struct GradientCheck {
    pub loss: &'static str,
    pub checked: usize,
    pub skipped: usize,
    pub worst_rel_err: f64,
    pub worst_value_err: f64,
}

/// Compares every loss's analytic gradient (and value) against central
/// differences of an independently written formula, over `n_batches`
/// random batches. Batches within 1e-4 of a kink are skipped.
pub fn loss_gradient_suite(seed: u64, n_batches: usize) -> Vec<GradientCheck> {
    use pu_core::losses::*;
    use rand::SeedableRng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["pn", "naive", "upu", "nnpu", "cpu"];
    let mut out: Vec<GradientCheck> = names
        .iter()
        .map(|&loss| GradientCheck {
            loss,
            checked: 0,
            skipped: 0,
            worst_rel_err: 0.0,
            worst_value_err: 0.0,
        })
        .collect();

    for _ in 0..n_batches {
        let n_p = rng.random_range(1..12);
        let n_u = rng.random_range(1..24);
        let p = random_etas(&mut rng, n_p);
        let u = random_etas(&mut rng, n_u);
        let x: Vec<f64> = p.iter().chain(&u).copied().collect();
        let labels: Vec<u8> = (0..x.len()).map(|_| rng.random_range(0..2u8)).collect();
        let pi: f64 = rng.random_range(0.05..0.6);
        let mu: f64 = rng.random_range(0.05..0.6);
        let gamma: f64 = rng.random_range(0.5..2.0);
        let split = |v: &[f64]| (v[..n_p].to_vec(), v[n_p..].to_vec());
        let view = BatchView::new(&p, &u).unwrap();

        for (k, name) in names.iter().enumerate() {
            let (lib, oracle): (LossResult, Oracle<'_>) = match *name {
                "pn" => {
                    let labels = labels.clone();
                    (
                        pn_batch_loss(&x, &labels).unwrap(),
                        Box::new(move |v: &[f64]| {
                            let l: Vec<f64> = v
                                .iter()
                                .zip(&labels)
                                .map(|(&e, &y)| if y == 1 { nll(e) } else { nll(1.0 - e) })
                                .collect();
                            mean(&l)
                        }),
                    )
                }
                "naive" => (
                    naive_negative_loss(&view),
                    Box::new(move |v: &[f64]| {
                        let (p, u) = split(v);
                        mean(&p.iter().map(|&e| nll(e)).collect::<Vec<_>>())
                            + mean(&u.iter().map(|&e| nll(1.0 - e)).collect::<Vec<_>>())
                    }),
                ),
                "upu" => (
                    upu_risk(&view, pi).unwrap(),
                    Box::new(move |v: &[f64]| {
                        let (p, u) = split(v);
                        pi * mean(&p.iter().map(|&e| nll(e)).collect::<Vec<_>>()) + nnpu_inner(&p, &u, pi)
                    }),
                ),
                "nnpu" => {
                    let inner = nnpu_inner(&p, &u, pi);
                    if inner.abs() < 1e-4 {
                        out[k].skipped += 1;
                        continue;
                    }
                    let lib = nnpu_risk(&view, pi, gamma).unwrap();
                    let pos = pi * mean(&p.iter().map(|&e| nll(e)).collect::<Vec<_>>());
                    let value_err = (lib.value - (pos + inner.max(0.0))).abs();
                    out[k].worst_value_err = out[k].worst_value_err.max(value_err);
                    // Below zero the training direction descends −γ·inner.
                    let f: Oracle<'_> = if inner > 0.0 {
                        Box::new(move |v: &[f64]| {
                            let (p, u) = split(v);
                            pi * mean(&p.iter().map(|&e| nll(e)).collect::<Vec<_>>()) + nnpu_inner(&p, &u, pi)
                        })
                    } else {
                        Box::new(move |v: &[f64]| {
                            let (p, u) = split(v);
                            -gamma * nnpu_inner(&p, &u, pi)
                        })
                    };
                    let numeric = central_diff(&f, &x, FD_STEP);
                    out[k].worst_rel_err = out[k].worst_rel_err.max(max_rel_err(&lib.grad, &numeric));
                    out[k].checked += 1;
                    continue;
                }
                _ => {
                    if (mean(&u) - mu).abs() < 1e-4 {
                        out[k].skipped += 1;
                        continue;
                    }
                    (
                        cpu_collective_loss(&view, mu).unwrap(),
                        Box::new(move |v: &[f64]| {
                            let (p, u) = split(v);
                            mean(&p.iter().map(|&e| nll(e)).collect::<Vec<_>>())
                                + nll(1.0 - (mean(&u) - mu).abs())
                        }),
                    )
                }
            };
            let numeric = central_diff(&oracle, &x, FD_STEP);
            out[k].worst_rel_err = out[k].worst_rel_err.max(max_rel_err(&lib.grad, &numeric));
            out[k].worst_value_err = out[k].worst_value_err.max((lib.value - oracle(&x)).abs());
            out[k].checked += 1;
        }
    }
    out
}
