//! Recurrence peaks: local maxima with topographic prominence, parabolic
//! refinement, and leading-edge shoulders.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakLabel {
    /// Early side of the first recurrence.
    A,
    /// Late side of the first recurrence.
    B,
    /// Main maximum of the second recurrence.
    C,
    /// Secondary feature on the leading edge of a main peak.
    Shoulder,
    /// Anything else above threshold.
    Minor,
}

impl fmt::Display for PeakLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
            Self::Shoulder => "shoulder",
            Self::Minor => "minor",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Refined time.
    pub t: f64,
    pub height: f64,
    pub prominence: f64,
    /// Mesh index of the discrete maximum (or inflection for shoulders).
    pub index: usize,
    pub label: PeakLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    /// Sorted by time.
    pub peaks: Vec<Peak>,
    /// Absolute prominence threshold used.
    pub threshold: f64,
}

impl PeakReport {
    pub fn with_label(&self, label: PeakLabel) -> impl Iterator<Item = &Peak> {
        self.peaks.iter().filter(move |p| p.label == label)
    }

    pub fn first(&self, label: PeakLabel) -> Option<&Peak> {
        self.with_label(label).next()
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "t,height,prominence,label")?;
        for p in &self.peaks {
            writeln!(w, "{},{},{},{}", p.t, p.height, p.prominence, p.label)?;
        }
        Ok(())
    }

    pub fn summary(&self, title: &str) -> String {
        let mut s = format!("{title}: {} feature(s), prominence threshold {:.4}\n", self.peaks.len(), self.threshold);
        for p in &self.peaks {
            s += &format!("  {:<8} t = {:.5}  S = {:.4}  prominence = {:.4}\n", p.label.to_string(), p.t, p.height, p.prominence);
        }
        s
    }
}

/// Interior local maxima whose prominence is at least `fraction` of the
/// highest interior maximum (the decay from `S(0) = 1` is not a recurrence).
/// All peaks come back as [`PeakLabel::Minor`]; see [`label_peaks`].
pub fn find_peaks(times: &[f64], values: &[f64], fraction: f64) -> PeakReport {
    let n = values.len();
    let maxima = local_maxima(values);
    let reference = maxima.iter().map(|&(lo, _)| values[lo]).fold(0.0, f64::max);
    let threshold = fraction * reference;
    let mut peaks = Vec::new();
    for (lo, hi) in maxima {
        let idx = (lo + hi) / 2;
        let prom = prominence(values, lo, hi);
        if prom >= threshold && prom > 0.0 {
            let (t, h) = refine(times, values, idx);
            peaks.push(Peak { t, height: h, prominence: prom, index: idx, label: PeakLabel::Minor });
        }
    }
    debug_assert!(n >= 3 || peaks.is_empty());
    PeakReport { peaks, threshold }
}

/// Plateaus `[lo, hi]` strictly above both neighbours.
fn local_maxima(values: &[f64]) -> Vec<(usize, usize)> {
    let n = values.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut k = 1;
    while k + 1 < n {
        if values[k] > values[k - 1] {
            // Walk across a flat top.
            let mut e = k;
            while e + 1 < n && values[e + 1] == values[k] {
                e += 1;
            }
            if e + 1 < n && values[e + 1] < values[k] {
                out.push((k, e));
            }
            k = e + 1;
        } else {
            k += 1;
        }
    }
    out
}

/// Height above the higher of the two bases reached before meeting a higher
/// value (or the series end) on either side of the plateau `[lo, hi]`.
fn prominence(v: &[f64], lo: usize, hi: usize) -> f64 {
    let h = v[lo];
    let mut left = h;
    for &x in v[..lo].iter().rev() {
        if x > h {
            break;
        }
        left = left.min(x);
    }
    let mut right = h;
    for &x in &v[hi + 1..] {
        if x > h {
            break;
        }
        right = right.min(x);
    }
    h - left.max(right)
}

/// Vertex of the parabola through three neighbouring samples.
fn refine(times: &[f64], v: &[f64], k: usize) -> (f64, f64) {
    let (y0, y1, y2) = (v[k - 1], v[k], v[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return (times[k], y1);
    }
    let off = (0.5 * (y0 - y2) / denom).clamp(-1.0, 1.0);
    let dt = if off >= 0.0 { times[k + 1] - times[k] } else { times[k] - times[k - 1] };
    (times[k] + off * dt, y1 - 0.25 * (y0 - y2) * off)
}

/// Time windows that identify the recurrences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceWindows {
    /// Recurrence period of the central orbit.
    pub period: f64,
    /// Half-width of each window as a fraction of the period.
    pub half_width: f64,
}

impl RecurrenceWindows {
    pub fn new(period: f64) -> Self {
        Self { period, half_width: 0.25 }
    }

    /// `[n T - w, n T + w]`.
    pub fn window(&self, n: usize) -> (f64, f64) {
        let c = n as f64 * self.period;
        (c - self.half_width * self.period, c + self.half_width * self.period)
    }
}

/// Labels the recurrences and adds leading-edge shoulders.
///
/// `a` is the highest peak in `[T - w, T]`, `b` the highest in `(T, T + w]`,
/// `c` the highest in `[2T - w, 2T + w]`. Shoulders are the other maxima on
/// the rising edge of a labelled peak, plus inflection shoulders there: dips
/// of `dS/dt` that stay positive, sized by the rise they defer
/// (`integral of (reference slope - dS/dt) dt`, in units of `S`).
pub fn label_peaks(report: &mut PeakReport, times: &[f64], values: &[f64], windows: &RecurrenceWindows) {
    let highest_in = |peaks: &[Peak], lo: f64, hi: f64, open_lo: bool| {
        peaks
            .iter()
            .enumerate()
            .filter(|(_, p)| (if open_lo { p.t > lo } else { p.t >= lo }) && p.t <= hi)
            .max_by(|x, y| x.1.height.total_cmp(&y.1.height).then(y.0.cmp(&x.0)))
            .map(|(i, _)| i)
    };
    let (w1lo, w1hi) = windows.window(1);
    let t1 = windows.period;
    let (w2lo, w2hi) = windows.window(2);
    let assignments = [
        (highest_in(&report.peaks, w1lo, t1, false), PeakLabel::A),
        (highest_in(&report.peaks, t1, w1hi, true), PeakLabel::B),
        (highest_in(&report.peaks, w2lo, w2hi, false), PeakLabel::C),
    ];
    for (idx, label) in assignments {
        if let Some(i) = idx {
            report.peaks[i].label = label;
        }
    }

    let mains: Vec<Peak> = report.peaks.iter().filter(|p| matches!(p.label, PeakLabel::A | PeakLabel::B | PeakLabel::C)).copied().collect();
    let mut extra = Vec::new();
    for main in &mains {
        // Rising edge: from the lowest point in the preceding half period.
        let start_t = main.t - 0.5 * windows.period;
        let first = times.iter().position(|&t| t >= start_t).unwrap_or(0);
        let Some(valley) = (first..=main.index).min_by(|&x, &y| values[x].total_cmp(&values[y]).then(y.cmp(&x))) else {
            continue;
        };
        for p in report.peaks.iter_mut() {
            if p.label == PeakLabel::Minor && p.index > valley && p.index < main.index {
                p.label = PeakLabel::Shoulder;
            }
        }
        for sh in inflection_shoulders(times, values, valley, main.index, report.threshold) {
            if !extra.iter().any(|e: &Peak| e.index == sh.index) {
                extra.push(sh);
            }
        }
    }
    report.peaks.extend(extra);
    report.peaks.sort_by(|x, y| x.t.total_cmp(&y.t));
}

/// Dips of the slope on a rising edge `[lo, hi]` (mesh indices).
fn inflection_shoulders(times: &[f64], values: &[f64], lo: usize, hi: usize, threshold: f64) -> Vec<Peak> {
    if hi < lo + 4 {
        return Vec::new();
    }
    let ks: Vec<usize> = (lo + 1..hi).collect();
    let d: Vec<f64> = ks.iter().map(|&k| (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1])).collect();
    let dt: Vec<f64> = ks.iter().map(|&k| 0.5 * (times[k + 1] - times[k - 1])).collect();
    let mut out = Vec::new();
    for m in 1..d.len().saturating_sub(1) {
        if !(d[m] <= d[m - 1] && d[m] < d[m + 1]) || d[m] <= 0.0 {
            continue;
        }
        let mut left = d[m];
        let mut l = m;
        while l > 0 && d[l - 1] >= d[m] {
            l -= 1;
            left = left.max(d[l]);
        }
        let mut right = d[m];
        let mut r = m;
        while r + 1 < d.len() && d[r + 1] >= d[m] {
            r += 1;
            right = right.max(d[r]);
        }
        // Only a dip bounded on both sides by steeper rise is a shoulder.
        if l == 0 || r + 1 == d.len() && right <= d[m] {
            continue;
        }
        let reference = left.min(right);
        let (mut a, mut b) = (m, m);
        while a > 0 && d[a - 1] < reference {
            a -= 1;
        }
        while b + 1 < d.len() && d[b + 1] < reference {
            b += 1;
        }
        if (a..=b).any(|k| d[k] < d[m] || (d[k] == d[m] && k < m)) {
            continue;
        }
        let deficit: f64 = (a..=b).map(|k| (reference - d[k]) * dt[k]).sum();
        if deficit >= threshold && deficit > 0.0 {
            let k = ks[m];
            out.push(Peak { t: times[k], height: values[k], prominence: deficit, index: k, label: PeakLabel::Shoulder });
        }
    }
    out
}

/// [`find_peaks`] followed by [`label_peaks`].
pub fn analyze_peaks(times: &[f64], values: &[f64], fraction: f64, windows: &RecurrenceWindows) -> PeakReport {
    let mut report = find_peaks(times, values, fraction);
    label_peaks(&mut report, times, values, windows);
    report
}
