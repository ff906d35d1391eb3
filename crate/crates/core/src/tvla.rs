//! Fixed-vs-random Welch t-tests with streaming, mergeable moment
//! accumulators.
//!
//! Class 0 is the fixed class, class 1 the random class, and
//! `t = (mean_fixed - mean_random) / sqrt(var_fixed / n_fixed + var_random / n_random)`
//! with unbiased sample variances. Memory is `O(n_samples)` regardless of the
//! number of traces.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 4.5;
/// Magnitude reported for a zero-variance sample with unequal means.
pub const T_CLAMP: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
struct ClassMoments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// Third and fourth central moment sums, kept only for the one-pass
    /// second-order test.
    m3: Vec<f64>,
    m4: Vec<f64>,
}

impl ClassMoments {
    fn new(n_samples: usize, higher: bool) -> Self {
        let h = if higher { n_samples } else { 0 };
        ClassMoments {
            n: 0,
            mean: vec![0.0; n_samples],
            m2: vec![0.0; n_samples],
            m3: vec![0.0; h],
            m4: vec![0.0; h],
        }
    }

    fn push<T: Copy + Into<f64>>(&mut self, x: &[T]) {
        self.n += 1;
        let n = self.n as f64;
        if self.m3.is_empty() {
            for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
                let delta = v.into() - *mean;
                *mean += delta / n;
                *m2 += delta * (v.into() - *mean);
            }
            return;
        }
        #[allow(clippy::needless_range_loop)]
        for i in 0..x.len() {
            let delta = x[i].into() - self.mean[i];
            let dn = delta / n;
            let dn2 = dn * dn;
            let term1 = delta * dn * (n - 1.0);
            self.mean[i] += dn;
            self.m4[i] += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2[i] - 4.0 * dn * self.m3[i];
            self.m3[i] += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2[i];
            self.m2[i] += term1;
        }
    }

    fn merge(&mut self, o: &ClassMoments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = o.clone();
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let higher = !self.m3.is_empty();
        for i in 0..self.mean.len() {
            let delta = o.mean[i] - self.mean[i];
            let d2 = delta * delta;
            let (ma2, mb2) = (self.m2[i], o.m2[i]);
            if higher {
                let (ma3, mb3) = (self.m3[i], o.m3[i]);
                self.m4[i] += o.m4[i]
                    + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                    + 6.0 * d2 * (na * na * mb2 + nb * nb * ma2) / (n * n)
                    + 4.0 * delta * (na * mb3 - nb * ma3) / n;
                self.m3[i] += mb3 + d2 * delta * na * nb * (na - nb) / (n * n) + 3.0 * delta * (na * mb2 - nb * ma2) / n;
            }
            self.m2[i] += mb2 + d2 * na * nb / n;
            self.mean[i] += delta * nb / n;
        }
        self.n += o.n;
    }
}

/// Per-class running moments for every sample index.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    n_samples: usize,
    classes: [ClassMoments; 2],
}

impl MomentAccumulator {
    /// First-order accumulator (mean and second central moment).
    pub fn new(n_samples: usize) -> Self {
        Self::with_higher_moments(n_samples, false)
    }

    /// With `higher`, also tracks third and fourth central moments so that
    /// [`t_second_order_onepass`](Self::t_second_order_onepass) works.
    pub fn with_higher_moments(n_samples: usize, higher: bool) -> Self {
        MomentAccumulator {
            n_samples,
            classes: [ClassMoments::new(n_samples, higher), ClassMoments::new(n_samples, higher)],
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn has_higher_moments(&self) -> bool {
        !self.classes[0].m3.is_empty() || self.n_samples == 0
    }

    pub fn count(&self, class: u8) -> u64 {
        self.classes[class as usize & 1].n
    }

    pub fn mean(&self, class: u8) -> &[f64] {
        &self.classes[class as usize & 1].mean
    }

    /// Unbiased sample variances of one class (zero with fewer than 2 traces).
    pub fn variance(&self, class: u8) -> Vec<f64> {
        let c = &self.classes[class as usize & 1];
        if c.n < 2 {
            return vec![0.0; self.n_samples];
        }
        c.m2.iter().map(|m| (m / (c.n - 1) as f64).max(0.0)).collect()
    }

    pub fn accumulate<T: Copy + Into<f64>>(&mut self, trace: &[T], label: u8) -> Result<()> {
        if trace.len() != self.n_samples {
            return Err(Error::ShapeMismatch {
                expected: self.n_samples,
                got: trace.len(),
            });
        }
        if label > 1 {
            return Err(Error::Config(format!("label {label} is neither 0 (fixed) nor 1 (random)")));
        }
        self.classes[label as usize].push(trace);
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.n_samples != self.n_samples {
            return Err(Error::ShapeMismatch {
                expected: self.n_samples,
                got: other.n_samples,
            });
        }
        if self.has_higher_moments() != other.has_higher_moments() {
            return Err(Error::Config("cannot merge accumulators of different orders".into()));
        }
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.merge(b);
        }
        Ok(())
    }

    fn check_classes(&self) -> Result<()> {
        for class in 0..2u8 {
            let count = self.count(class);
            if count < 2 {
                return Err(Error::DegenerateClass { class, count });
            }
        }
        Ok(())
    }

    /// First-order Welch t per sample, plus the indices that had to be clamped.
    pub fn t_first_order(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        self.check_classes()?;
        let (f, r) = (&self.classes[0], &self.classes[1]);
        let (vf, vr) = (self.variance(0), self.variance(1));
        Ok(welch_all(&f.mean, &vf, f.n, &r.mean, &vr, r.n))
    }

    /// Second-order t from central moments up to order four, without a second
    /// pass. Numerically weaker than the two-pass form for very long runs.
    pub fn t_second_order_onepass(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        if !self.has_higher_moments() {
            return Err(Error::Config("accumulator was created without higher moments".into()));
        }
        self.check_classes()?;
        let centered = |c: &ClassMoments| -> (Vec<f64>, Vec<f64>) {
            let n = c.n as f64;
            let mean: Vec<f64> = c.m2.iter().map(|m2| m2 / n).collect();
            let var = c
                .m2
                .iter()
                .zip(&c.m4)
                .map(|(m2, m4)| ((m4 - m2 * m2 / n) / (n - 1.0)).max(0.0))
                .collect();
            (mean, var)
        };
        let (mf, vf) = centered(&self.classes[0]);
        let (mr, vr) = centered(&self.classes[1]);
        Ok(welch_all(&mf, &vf, self.classes[0].n, &mr, &vr, self.classes[1].n))
    }
}

/// Welch t for one sample. Zero variance gives 0 for equal means and a
/// clamped `±T_CLAMP` otherwise; the flag reports the clamp.
pub fn welch_t(mean_f: f64, var_f: f64, n_f: u64, mean_r: f64, var_r: f64, n_r: u64) -> (f64, bool) {
    let diff = mean_f - mean_r;
    let se2 = var_f / n_f as f64 + var_r / n_r as f64;
    if se2 <= 0.0 || !se2.is_finite() {
        if diff == 0.0 {
            return (0.0, false);
        }
        return (T_CLAMP.copysign(diff), true);
    }
    let t = diff / se2.sqrt();
    if t.abs() > T_CLAMP {
        (T_CLAMP.copysign(t), true)
    } else {
        (t, false)
    }
}

fn welch_all(mf: &[f64], vf: &[f64], nf: u64, mr: &[f64], vr: &[f64], nr: u64) -> (Vec<f64>, Vec<usize>) {
    let mut clamped = Vec::new();
    let t = (0..mf.len())
        .map(|i| {
            let (t, c) = welch_t(mf[i], vf[i], nf, mr[i], vr[i], nr);
            if c {
                clamped.push(i);
            }
            t
        })
        .collect();
    (t, clamped)
}

/// Half-open range of sample indices excluded from the verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }
}

pub fn in_windows(windows: &[Window], i: usize) -> bool {
    windows.iter().any(|w| w.contains(i))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvlaReport {
    pub order: u8,
    #[serde(skip)]
    pub t: Vec<f64>,
    pub threshold: f64,
    pub n_fixed: u64,
    pub n_random: u64,
    /// Largest |t| outside the excluded windows.
    pub max_abs_t: f64,
    pub max_index: Option<usize>,
    /// Largest |t| over all samples.
    pub max_abs_t_all: f64,
    pub exceeding: Vec<usize>,
    pub excluded: Vec<Window>,
    pub excluded_exceeding: Vec<usize>,
    pub clamped: Vec<usize>,
}

impl TvlaReport {
    pub fn new(order: u8, t: Vec<f64>, clamped: Vec<usize>, threshold: f64, windows: &[Window], counts: (u64, u64)) -> Self {
        let mut rep = TvlaReport {
            order,
            threshold,
            n_fixed: counts.0,
            n_random: counts.1,
            max_abs_t: 0.0,
            max_index: None,
            max_abs_t_all: 0.0,
            exceeding: Vec::new(),
            excluded: windows.to_vec(),
            excluded_exceeding: Vec::new(),
            clamped,
            t,
        };
        for (i, &t) in rep.t.iter().enumerate() {
            let a = t.abs();
            rep.max_abs_t_all = rep.max_abs_t_all.max(a);
            if in_windows(windows, i) {
                if a > threshold {
                    rep.excluded_exceeding.push(i);
                }
                continue;
            }
            if rep.max_index.is_none() || a > rep.max_abs_t {
                rep.max_abs_t = a;
                rep.max_index = Some(i);
            }
            if a > threshold {
                rep.exceeding.push(i);
            }
        }
        rep
    }

    pub fn passed(&self) -> bool {
        self.exceeding.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// No |t| above the threshold outside the windows; lists exceedances
    /// inside the windows as warnings.
    Pass { warnings: Vec<usize> },
    Fail { indices: Vec<usize> },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }
}

/// Re-evaluates a report against a (possibly different) set of windows.
pub fn verdict(report: &TvlaReport, windows: &[Window]) -> Verdict {
    let mut fail = Vec::new();
    let mut warn = Vec::new();
    for (i, &t) in report.t.iter().enumerate() {
        if t.abs() > report.threshold {
            if in_windows(windows, i) {
                warn.push(i);
            } else {
                fail.push(i);
            }
        }
    }
    if fail.is_empty() {
        Verdict::Pass { warnings: warn }
    } else {
        Verdict::Fail { indices: fail }
    }
}

/// First-order report from an accumulator.
pub fn report_first_order(acc: &MomentAccumulator, threshold: f64, windows: &[Window]) -> Result<TvlaReport> {
    let (t, clamped) = acc.t_first_order()?;
    Ok(TvlaReport::new(1, t, clamped, threshold, windows, (acc.count(0), acc.count(1))))
}

/// t-scores, clamped sample indices, and the (fixed, random) trace counts.
pub type TScores = (Vec<f64>, Vec<usize>, (u64, u64));

/// Two-pass second-order test over in-memory traces: center every trace by
/// its class mean, square, and run the first-order test on the result.
pub fn t_second_order_twopass<'a, I>(traces: I, n_samples: usize) -> Result<TScores>
where
    I: Iterator<Item = (&'a [f32], u8)> + Clone,
{
    let mut first = MomentAccumulator::new(n_samples);
    for (x, l) in traces.clone() {
        first.accumulate(x, l)?;
    }
    first.check_classes()?;
    let means = [first.mean(0).to_vec(), first.mean(1).to_vec()];
    let mut second = MomentAccumulator::new(n_samples);
    let mut buf = vec![0.0f64; n_samples];
    for (x, l) in traces {
        let m = &means[l as usize];
        for i in 0..n_samples {
            let d = x[i] as f64 - m[i];
            buf[i] = d * d;
        }
        second.accumulate(&buf, l)?;
    }
    let (t, c) = second.t_first_order()?;
    Ok((t, c, (second.count(0), second.count(1))))
}

/// `sample_index,t_first[,t_second]`.
pub fn write_csv<W: Write>(mut w: W, first: &[f64], second: Option<&[f64]>) -> Result<()> {
    match second {
        Some(_) => writeln!(w, "sample_index,t_first,t_second")?,
        None => writeln!(w, "sample_index,t_first")?,
    }
    for (i, t) in first.iter().enumerate() {
        match second {
            Some(s) => writeln!(w, "{i},{t},{}", s[i])?,
            None => writeln!(w, "{i},{t}")?,
        }
    }
    Ok(())
}

#[derive(Default, Serialize)]
struct Summary<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    first: Option<&'a TvlaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_verdict: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    second: Option<&'a TvlaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    second_verdict: Option<&'static str>,
}

fn word(r: &TvlaReport) -> &'static str {
    if r.passed() {
        "PASS"
    } else {
        "FAIL"
    }
}

/// JSON summary of the given reports, keyed by their order.
pub fn summary_json(reports: &[&TvlaReport]) -> String {
    let mut s = Summary::default();
    for r in reports {
        if r.order == 1 {
            s.first = Some(r);
            s.first_verdict = Some(word(r));
        } else {
            s.second = Some(r);
            s.second_verdict = Some(word(r));
        }
    }
    serde_json::to_string_pretty(&s).expect("report serializes")
}
