//! Dormand–Prince 5(4) with the standard 4th-order continuous extension,
//! specialised to complex state vectors.

use num_complex::Complex64;

type C = Complex64;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Sum over accepted steps of the largest absolute component of the
    /// embedded local error estimate.
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Failure {
    StepUnderflow { t: f64, h: f64 },
    TooManySteps { t: f64 },
}

fn weighted_rms(err: &[C], y0: &[C], y1: &[C], tol: &Tolerances) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.abs + tol.rel * a.norm().max(b.norm());
            let r = e.norm() / sc;
            r * r
        })
        .sum();
    (s / n).sqrt()
}

fn axpy_into(out: &mut [C], y: &[C], terms: &[(f64, &[C])], h: f64) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = y[i];
        for &(c, k) in terms {
            if c != 0.0 {
                acc += k[i] * (h * c);
            }
        }
        *o = acc;
    }
}

/// Integrates `y' = f(y)` (autonomous) from `times[0]` through every entry of
/// `times`, calling `emit(k, t_k, y(t_k))` in order. `times` must be ascending.
pub(crate) fn integrate<F, E, X>(
    mut rhs: F,
    y0: &[C],
    times: &[f64],
    tol: &Tolerances,
    mut emit: E,
) -> Result<StepStats, X>
where
    F: FnMut(&[C], &mut [C]),
    E: FnMut(usize, f64, &[C]) -> Result<(), X>,
    X: From<Failure>,
{
    let n = y0.len();
    let mut stats = StepStats::default();
    if times.is_empty() {
        return Ok(stats);
    }
    let mut t = times[0];
    let t_end = *times.last().unwrap();
    let mut y = y0.to_vec();
    emit(0, t, &y)?;
    let mut next_out = 1;
    while next_out < times.len() && times[next_out] <= t {
        emit(next_out, times[next_out], &y)?;
        next_out += 1;
    }
    if next_out == times.len() {
        return Ok(stats);
    }

    let zero = C::new(0.0, 0.0);
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut stage = vec![zero; n];
    let mut y_new = vec![zero; n];
    let mut err = vec![zero; n];
    let mut dense = vec![zero; n];

    rhs(&y, &mut k1);
    stats.rhs_evals += 1;

    // Initial step (Hairer–Wanner heuristic).
    let mut h = {
        let scale = |v: &[C], ref_: &[C]| -> f64 {
            let s: f64 = v
                .iter()
                .zip(ref_)
                .map(|(a, r)| {
                    let q = a.norm() / (tol.abs + tol.rel * r.norm());
                    q * q
                })
                .sum();
            (s / n.max(1) as f64).sqrt()
        };
        let d0 = scale(&y, &y);
        let d1 = scale(&k1, &y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(t_end - t).min(tol.max_step);
        axpy_into(&mut stage, &y, &[(1.0, &k1)], h0);
        rhs(&stage, &mut k2);
        stats.rhs_evals += 1;
        let diff: Vec<C> = k2.iter().zip(&k1).map(|(a, b)| a - b).collect();
        let d2 = scale(&diff, &y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(tol.max_step)
    };

    let mut steps = 0usize;
    let mut last_rejected = false;
    while t < t_end {
        if steps >= tol.max_steps {
            return Err(Failure::TooManySteps { t }.into());
        }
        steps += 1;
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Failure::StepUnderflow { t, h }.into());
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        axpy_into(&mut stage, &y, &[(A21, &k1)], h);
        rhs(&stage, &mut k2);
        axpy_into(&mut stage, &y, &[(A31, &k1), (A32, &k2)], h);
        rhs(&stage, &mut k3);
        axpy_into(&mut stage, &y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h);
        rhs(&stage, &mut k4);
        axpy_into(
            &mut stage,
            &y,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            h,
        );
        rhs(&stage, &mut k5);
        axpy_into(
            &mut stage,
            &y,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            h,
        );
        rhs(&stage, &mut k6);
        axpy_into(
            &mut y_new,
            &y,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            h,
        );
        rhs(&y_new, &mut k7);
        stats.rhs_evals += 6;

        for i in 0..n {
            err[i] =
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        }
        let e = weighted_rms(&err, &y, &y_new, tol);

        if e <= 1.0 {
            stats.accepted += 1;
            stats.error_estimate += err.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let t_new = if last { t_end } else { t + h };
            while next_out < times.len() && times[next_out] <= t_new {
                let theta = (times[next_out] - t) / h;
                let theta1 = 1.0 - theta;
                for i in 0..n {
                    let r1 = y[i];
                    let r2 = y_new[i] - y[i];
                    let r3 = k1[i] * h - r2;
                    let r4 = r2 - k7[i] * h - r3;
                    let r5 = (k1[i] * D1
                        + k3[i] * D3
                        + k4[i] * D4
                        + k5[i] * D5
                        + k6[i] * D6
                        + k7[i] * D7)
                        * h;
                    dense[i] = r1 + (r2 + (r3 + (r4 + r5 * theta1) * theta) * theta1) * theta;
                }
                if times[next_out] == t_new {
                    emit(next_out, t_new, &y_new)?;
                } else {
                    emit(next_out, times[next_out], &dense)?;
                }
                next_out += 1;
            }
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            let mut fac = if e == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * e.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(tol.max_step);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (SAFETY * e.powf(-0.2)).clamp(FAC_MIN, 1.0);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Fail;
    impl From<Failure> for Fail {
        fn from(_: Failure) -> Self {
            Fail
        }
    }

    fn tol(rel: f64) -> Tolerances {
        Tolerances {
            rel,
            abs: rel * 1e-2,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }

    #[test]
    fn complex_rotation_with_decay() {
        // y' = (−0.3 + 2i) y, exact y = exp((−0.3+2i)t)
        let lam = C::new(-0.3, 2.0);
        let times: Vec<f64> = (0..=50).map(|k| 0.1 * k as f64).collect();
        let mut got = Vec::new();
        integrate::<_, _, Fail>(
            |y, dy| dy[0] = lam * y[0],
            &[C::new(1.0, 0.0)],
            &times,
            &tol(1e-10),
            |_, t, y| {
                got.push((t, y[0]));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(got.len(), times.len());
        for (t, y) in got {
            let exact = (lam * t).exp();
            assert!(
                (y - exact).norm() < 1e-8,
                "t={t} err={}",
                (y - exact).norm()
            );
        }
    }

    #[test]
    fn dense_output_is_fourth_order_accurate() {
        // coarse tolerance forces long steps, outputs fall strictly inside them
        let times: Vec<f64> = (0..=200).map(|k| 0.01 * k as f64).collect();
        let mut worst: f64 = 0.0;
        integrate::<_, _, Fail>(
            |y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[C::new(1.0, 0.0), C::new(0.0, 0.0)],
            &times,
            &tol(1e-7),
            |_, t, y| {
                worst = worst.max((y[0].re - t.cos()).abs());
                Ok(())
            },
        )
        .unwrap();
        assert!(worst < 1e-5, "worst {worst}");
    }

    #[test]
    fn step_limit_reports_failure() {
        let t = Tolerances {
            max_steps: 3,
            ..tol(1e-12)
        };
        let r = integrate::<_, _, Fail>(
            |y, dy| dy[0] = y[0] * C::new(0.0, 50.0),
            &[C::new(1.0, 0.0)],
            &[0.0, 10.0],
            &t,
            |_, _, _| Ok(()),
        );
        assert!(r.is_err());
    }
}
