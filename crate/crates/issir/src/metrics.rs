//! Objective separation quality: SDR / SIR / SAR per source.
//!
//! An estimate is split into three parts: `s_target`, its least-squares
//! projection onto the span of `L` delayed copies of the target reference;
//! `e_interf`, the extra part explained by the other references' delays; and
//! `e_artif`, the remainder. The three sum back to the estimate exactly by
//! construction. Gram systems are assembled from FFT cross-correlations
//! (delayed copies extend past the signal end, so the blocks are Toeplitz)
//! and solved by Cholesky factorization with a small ridge.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::Scalar;

const SCORE_CAP_DB: f64 = 100.0;
const RIDGE_SCALE: f64 = 1e-12;

/// Split of one estimate against a reference set. Vectors have length
/// `signal_len + num_delays - 1` (delayed copies extend past the end).
#[derive(Debug, Clone)]
pub struct Decomposition<T> {
    pub s_target: Vec<T>,
    pub e_interf: Vec<T>,
    pub e_artif: Vec<T>,
    /// True when the Gram system was singular enough that the ridge
    /// materially shaped the solution.
    pub ill_conditioned: bool,
}

/// Scores for one source; `None` marks an undefined entry (silent reference
/// or estimate) that aggregates must skip.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceScores {
    pub sdr_db: Option<f64>,
    pub sir_db: Option<f64>,
    pub sar_db: Option<f64>,
}

/// Per-source scores for one method, optionally expressed as differences
/// against a named baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationScores {
    pub per_source: Vec<SourceScores>,
    /// Name of the baseline these scores are relative to, if any.
    pub baseline: Option<String>,
}

impl SeparationScores {
    pub fn mean_sdr(&self) -> Option<f64> {
        mean(self.per_source.iter().filter_map(|s| s.sdr_db))
    }

    pub fn mean_sir(&self) -> Option<f64> {
        mean(self.per_source.iter().filter_map(|s| s.sir_db))
    }

    pub fn mean_sar(&self) -> Option<f64> {
        mean(self.per_source.iter().filter_map(|s| s.sar_db))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Element-wise score differences `scores - baseline_scores`; undefined
/// entries stay undefined.
pub fn relative_scores(
    scores: &SeparationScores,
    baseline_scores: &SeparationScores,
    baseline_name: &str,
) -> Result<SeparationScores> {
    if scores.per_source.len() != baseline_scores.per_source.len() {
        return Err(Error::DimMismatch(format!(
            "{} sources vs baseline's {}",
            scores.per_source.len(),
            baseline_scores.per_source.len()
        )));
    }
    let delta = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    Ok(SeparationScores {
        per_source: scores
            .per_source
            .iter()
            .zip(&baseline_scores.per_source)
            .map(|(s, b)| SourceScores {
                sdr_db: delta(s.sdr_db, b.sdr_db),
                sir_db: delta(s.sir_db, b.sir_db),
                sar_db: delta(s.sar_db, b.sar_db),
            })
            .collect(),
        baseline: Some(baseline_name.to_string()),
    })
}

/// Reusable projection engine for one reference set: builds and factors the
/// Gram systems once, then decomposes any number of estimates.
pub struct Projector<T> {
    refs: Vec<Vec<T>>,
    sample_rate: u32,
    num_delays: usize,
    out_len: usize,
    full: CholeskyFactor<T>,
    per_source: Vec<Option<CholeskyFactor<T>>>,
    ill_conditioned: bool,
}

impl<T: Scalar> Projector<T> {
    pub fn new(references: &[Signal<T>], num_delays: usize) -> Result<Self> {
        let first = references.first().ok_or(Error::NoSources)?;
        let n = first.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if num_delays == 0 || num_delays > n {
            return Err(Error::InvalidConfig(format!(
                "need 1..={n} delays, got {num_delays}"
            )));
        }
        for r in references {
            if r.len() != n || r.sample_rate != first.sample_rate {
                return Err(Error::DimMismatch(
                    "references must share length and rate".into(),
                ));
            }
        }

        let j = references.len();
        let l = num_delays;
        let mut correlator = Correlator::<T>::new(n, l);
        // Cross-correlations c[jk][d] = sum_t ref_j(t) ref_k(t + d) for
        // d in -(l-1)..=(l-1), stored at offset d + l - 1.
        let mut corr = vec![vec![T::zero(); 2 * l - 1]; j * j];
        for a in 0..j {
            for b in a..j {
                let c = correlator.correlate(&references[a].samples, &references[b].samples);
                corr[a * j + b].copy_from_slice(&c);
                if b != a {
                    // c_{ba}(d) = c_{ab}(-d)
                    for d in 0..2 * l - 1 {
                        corr[b * j + a][d] = c[2 * l - 2 - d];
                    }
                }
            }
        }

        let dim = j * l;
        let mut gram = vec![T::zero(); dim * dim];
        for a in 0..j {
            for b in 0..j {
                let c = &corr[a * j + b];
                for ta in 0..l {
                    for tb in 0..l {
                        // <delay(ref_a, ta), delay(ref_b, tb)> = c_ab(ta - tb)
                        let d = (ta + l - 1) - tb;
                        gram[(a * l + ta) * dim + (b * l + tb)] = c[d];
                    }
                }
            }
        }
        let full = CholeskyFactor::new(gram, dim)?;
        let mut ill = full.ill_conditioned;

        let per_source = (0..j)
            .map(|a| {
                let c = &corr[a * j + a];
                let mut g = vec![T::zero(); l * l];
                for ta in 0..l {
                    for tb in 0..l {
                        g[ta * l + tb] = c[(ta + l - 1) - tb];
                    }
                }
                match CholeskyFactor::new(g, l) {
                    Ok(f) => {
                        ill |= f.ill_conditioned;
                        Some(f)
                    }
                    Err(_) => None, // all-silent reference
                }
            })
            .collect();

        Ok(Self {
            refs: references.iter().map(|r| r.samples.clone()).collect(),
            sample_rate: first.sample_rate,
            num_delays,
            out_len: n + l - 1,
            full,
            per_source,
            ill_conditioned: ill,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.refs.len()
    }

    fn rhs(&self, estimate: &[T]) -> Vec<T> {
        let l = self.num_delays;
        let mut correlator = Correlator::<T>::new(estimate.len(), l);
        let mut rhs = Vec::with_capacity(self.refs.len() * l);
        for r in &self.refs {
            // <delay(ref, tau), estimate> = sum_t ref(t) est(t + tau)
            let c = correlator.correlate(r, estimate);
            rhs.extend_from_slice(&c[l - 1..2 * l - 1]);
        }
        rhs
    }

    /// Filter-and-sum: out(t) = sum_j sum_tau coef[j*l+tau] ref_j(t - tau).
    fn synthesize(&self, coefs: &[T], sources: &[usize]) -> Vec<T> {
        let l = self.num_delays;
        let mut out = vec![T::zero(); self.out_len];
        for &jx in sources {
            let r = &self.refs[jx];
            for tau in 0..l {
                let c = coefs[jx * l + tau];
                if c == T::zero() {
                    continue;
                }
                for (t, &x) in r.iter().enumerate() {
                    out[t + tau] += c * x;
                }
            }
        }
        out
    }

    /// Decompose an estimate against source `target`.
    pub fn decompose(&self, estimate: &Signal<T>, target: usize) -> Result<Decomposition<T>> {
        if estimate.len() + self.num_delays - 1 != self.out_len
            || estimate.sample_rate != self.sample_rate
        {
            return Err(Error::DimMismatch(
                "estimate must match the references' length and rate".into(),
            ));
        }
        if target >= self.refs.len() {
            return Err(Error::InvalidConfig(format!(
                "target {target} out of {} sources",
                self.refs.len()
            )));
        }
        let single = self.per_source[target].as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("reference {target} is all zero"))
        })?;

        let l = self.num_delays;
        let rhs = self.rhs(&estimate.samples);

        let coef_target = single.solve(&rhs[target * l..(target + 1) * l]);
        let mut coefs_t = vec![T::zero(); self.refs.len() * l];
        coefs_t[target * l..(target + 1) * l].copy_from_slice(&coef_target);
        let s_target = self.synthesize(&coefs_t, &[target]);

        let coef_all = self.full.solve(&rhs);
        let p_all = self.synthesize(&coef_all, &(0..self.refs.len()).collect::<Vec<_>>());

        let mut padded = estimate.samples.clone();
        padded.resize(self.out_len, T::zero());
        let e_interf: Vec<T> = p_all
            .iter()
            .zip(&s_target)
            .map(|(&a, &t)| a - t)
            .collect();
        let e_artif: Vec<T> = padded.iter().zip(&p_all).map(|(&e, &a)| e - a).collect();

        Ok(Decomposition {
            s_target,
            e_interf,
            e_artif,
            ill_conditioned: self.ill_conditioned,
        })
    }
}

/// One-shot decomposition; build a [`Projector`] instead when evaluating
/// several estimates against the same references.
pub fn decompose<T: Scalar>(
    estimate: &Signal<T>,
    references: &[Signal<T>],
    target: usize,
    num_delays: usize,
) -> Result<Decomposition<T>> {
    Projector::new(references, num_delays)?.decompose(estimate, target)
}

fn energy<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum()
}

fn ratio_db<T: Scalar>(num: T, den: T) -> f64 {
    let num = num.to_f64().unwrap_or(0.0);
    let den = den.to_f64().unwrap_or(0.0);
    let db = 10.0 * (num / den).log10();
    if db.is_nan() {
        // 0/0: no signal at all in either part.
        f64::NEG_INFINITY
    } else {
        db.min(SCORE_CAP_DB)
    }
}

/// SDR / SIR / SAR of one decomposition.
pub fn scores<T: Scalar>(d: &Decomposition<T>) -> SourceScores {
    let st = energy(&d.s_target);
    let ei = energy(&d.e_interf);
    let ea = energy(&d.e_artif);
    let distortion: T = d
        .e_interf
        .iter()
        .zip(&d.e_artif)
        .map(|(&a, &b)| (a + b) * (a + b))
        .sum();
    let target_plus_interf: T = d
        .s_target
        .iter()
        .zip(&d.e_interf)
        .map(|(&a, &b)| (a + b) * (a + b))
        .sum();
    SourceScores {
        sdr_db: Some(ratio_db(st, distortion)),
        sir_db: Some(ratio_db(st, ei)),
        sar_db: Some(ratio_db(target_plus_interf, ea)),
    }
}

/// Evaluate a full estimate set against references. Sources with a silent
/// reference or silent estimate get undefined scores.
pub fn evaluate<T: Scalar>(
    references: &[Signal<T>],
    estimates: &[Signal<T>],
    num_delays: usize,
) -> Result<SeparationScores> {
    if references.len() != estimates.len() {
        return Err(Error::DimMismatch(format!(
            "{} references but {} estimates",
            references.len(),
            estimates.len()
        )));
    }
    let projector = Projector::new(references, num_delays)?;
    let per_source = references
        .iter()
        .zip(estimates)
        .enumerate()
        .map(|(j, (r, e))| {
            if r.energy() == T::zero() || e.energy() == T::zero() {
                return Ok(SourceScores::default());
            }
            Ok(scores(&projector.decompose(e, j)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparationScores {
        per_source,
        baseline: None,
    })
}

/// Linear cross-correlation of two equal-length real vectors at lags
/// `-(l-1)..=(l-1)`, via zero-padded FFTs.
struct Correlator<T: Scalar> {
    fft_len: usize,
    planner: FftPlanner<T>,
    lags: usize,
}

impl<T: Scalar> Correlator<T> {
    fn new(n: usize, l: usize) -> Self {
        Self {
            fft_len: (n + l).next_power_of_two(),
            planner: FftPlanner::new(),
            lags: l,
        }
    }

    /// `out[d + l - 1] = sum_t a(t) b(t + d)`.
    fn correlate(&mut self, a: &[T], b: &[T]) -> Vec<T> {
        let m = self.fft_len;
        let fft = self.planner.plan_fft_forward(m);
        let inv = self.planner.plan_fft_inverse(m);
        let mut fa: Vec<Complex<T>> = a
            .iter()
            .map(|&x| Complex::new(x, T::zero()))
            .chain(std::iter::repeat(Complex::new(T::zero(), T::zero())))
            .take(m)
            .collect();
        let mut fb: Vec<Complex<T>> = b
            .iter()
            .map(|&x| Complex::new(x, T::zero()))
            .chain(std::iter::repeat(Complex::new(T::zero(), T::zero())))
            .take(m)
            .collect();
        fft.process(&mut fa);
        fft.process(&mut fb);
        let scale = T::one() / T::from_f64_c(m as f64);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = x.conj() * *y * scale;
        }
        inv.process(&mut fa);
        let l = self.lags;
        let mut out = vec![T::zero(); 2 * l - 1];
        for d in 0..l {
            out[d + l - 1] = fa[d].re; // lag +d
            if d > 0 {
                out[l - 1 - d] = fa[m - d].re; // lag -d
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor of a symmetric system with a relative
/// ridge, plus solve.
struct CholeskyFactor<T> {
    l: Vec<T>,
    dim: usize,
    ill_conditioned: bool,
}

impl<T: Scalar> CholeskyFactor<T> {
    fn new(mut a: Vec<T>, dim: usize) -> Result<Self> {
        let trace: T = (0..dim).map(|i| a[i * dim + i]).sum();
        if trace <= T::zero() {
            return Err(Error::InvalidConfig("all-zero Gram system".into()));
        }
        let ridge = T::from_f64_c(RIDGE_SCALE) * trace / T::from_f64_c(dim as f64);
        for i in 0..dim {
            a[i * dim + i] += ridge;
        }
        let mut ill = false;
        let floor = ridge * T::from_f64_c(4.0);
        for k in 0..dim {
            let mut pivot = a[k * dim + k];
            for i in 0..k {
                pivot -= a[k * dim + i] * a[k * dim + i];
            }
            if pivot <= floor {
                ill = true;
                pivot = pivot.max(ridge);
            }
            let lkk = pivot.sqrt();
            a[k * dim + k] = lkk;
            for r in k + 1..dim {
                let mut v = a[r * dim + k];
                for i in 0..k {
                    v -= a[r * dim + i] * a[k * dim + i];
                }
                a[r * dim + k] = v / lkk;
            }
        }
        Ok(Self {
            l: a,
            dim,
            ill_conditioned: ill,
        })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut v = x[i];
            for (k, &xk) in x[..i].iter().enumerate() {
                v -= self.l[i * n + k] * xk;
            }
            x[i] = v / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for (k, &xk) in x.iter().enumerate().skip(i + 1) {
                v -= self.l[k * n + i] * xk;
            }
            x[i] = v / self.l[i * n + i];
        }
        x
    }
}
