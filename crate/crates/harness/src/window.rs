//! Sliding-window threshold queries over time panes.
//!
//! A window of `w` panes is maintained with turnstile updates: when it
//! slides by one pane the oldest pane is subtracted and the newest merged.
//! Subtraction cannot restore extrema, so they are taken from the member
//! panes after every step.

use std::io::Read;

use moments_sketch::{CascadeStats, MomentsSketch, SolverConfig, ThresholdOutcome};

use crate::cube::IngestReport;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pane {
    pub start: f64,
    pub sketch: MomentsSketch,
}

impl Pane {
    /// Extrema of the pane's values; `None` when it is empty.
    pub fn extrema(&self) -> Option<(f64, f64)> {
        (!self.sketch.is_empty()).then(|| (self.sketch.min(), self.sketch.max()))
    }
}

/// Contiguous, equally wide panes in time order. Gaps in the input become
/// empty panes.
#[derive(Debug, Clone, PartialEq)]
pub struct PaneSeries {
    pane_width: f64,
    order: usize,
    panes: Vec<Pane>,
}

impl PaneSeries {
    /// Buckets `(time, value)` points into panes `[start, start + width)`
    /// aligned to multiples of `pane_width`.
    pub fn from_points(points: &[(f64, f64)], pane_width: f64, order: usize) -> Result<Self> {
        if !(pane_width > 0.0 && pane_width.is_finite()) {
            return Err(HarnessError::Invalid(format!("pane width must be positive, got {pane_width}")));
        }
        MomentsSketch::new(order)?;
        if let Some(&(t, _)) = points.iter().find(|(t, _)| !t.is_finite()) {
            return Err(HarnessError::Invalid(format!("non-finite time {t}")));
        }
        let index = |t: f64| (t / pane_width).floor() as i64;
        let Some(first) = points.iter().map(|&(t, _)| index(t)).min() else {
            return Ok(Self { pane_width, order, panes: Vec::new() });
        };
        let last = points.iter().map(|&(t, _)| index(t)).max().expect("nonempty");
        let mut panes = (first..=last)
            .map(|i| {
                Ok(Pane {
                    start: i as f64 * pane_width,
                    sketch: MomentsSketch::new(order)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for &(t, v) in points {
            panes[(index(t) - first) as usize].sketch.accumulate(v)?;
        }
        Ok(Self { pane_width, order, panes })
    }

    /// Reads `time` and `metric` columns from CSV with a header row,
    /// skipping and counting malformed rows.
    pub fn from_csv<R: Read>(
        input: R,
        time_column: &str,
        metric: &str,
        pane_width: f64,
        order: usize,
    ) -> Result<(Self, IngestReport)> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let headers = reader.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| HarnessError::Invalid(format!("no column named {name:?}")))
        };
        let (tc, mc) = (column(time_column)?, column(metric)?);
        let mut report = IngestReport::default();
        let mut points = Vec::new();
        for record in reader.records() {
            let parsed = record.ok().filter(|r| r.len() == headers.len()).and_then(|r| {
                let t = r[tc].trim().parse::<f64>().ok()?;
                let v = r[mc].trim().parse::<f64>().ok()?;
                (t.is_finite() && v.is_finite()).then_some((t, v))
            });
            match parsed {
                Some(p) => {
                    points.push(p);
                    report.rows += 1;
                }
                None => report.skipped += 1,
            }
        }
        if points.is_empty() {
            return Err(HarnessError::NoRows { skipped: report.skipped });
        }
        Ok((Self::from_points(&points, pane_width, order)?, report))
    }

    pub fn pane_width(&self) -> f64 {
        self.pane_width
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn panes(&self) -> &[Pane] {
        &self.panes
    }

    pub fn len(&self) -> usize {
        self.panes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panes.is_empty()
    }

    /// Number of panes in a window of `window_width` time units.
    pub fn panes_per_window(&self, window_width: f64) -> Result<usize> {
        let ratio = window_width / self.pane_width;
        let w = ratio.round();
        if !(w >= 1.0) || (ratio - w).abs() > 1e-9 * ratio {
            return Err(HarnessError::Invalid(format!(
                "window width {window_width} is not a positive multiple of the pane width {}",
                self.pane_width
            )));
        }
        Ok(w as usize)
    }

    pub fn turnstile(&self, panes_per_window: usize) -> Turnstile<'_> {
        Turnstile {
            panes: &self.panes,
            width: panes_per_window.max(1),
            next: 0,
            count: 0,
            sums: vec![(0.0, 0.0); 2 * self.order],
            window: None,
        }
    }
}

/// Window sketches produced by turnstile updates.
///
/// The running sums are kept as unevaluated double-double pairs, so the
/// cancellation that follows a large pane leaving the window does not
/// expose rounding error accumulated while it was inside.
#[derive(Debug)]
pub struct Turnstile<'a> {
    panes: &'a [Pane],
    width: usize,
    next: usize,
    count: u64,
    /// Power sums followed by log sums, as `(high, low)` pairs.
    sums: Vec<(f64, f64)>,
    window: Option<MomentsSketch>,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn add_dd((hi, lo): (f64, f64), b: f64) -> (f64, f64) {
    let (s, e) = two_sum(hi, b);
    let lo = lo + e;
    let hi = s + lo;
    (hi, lo - (hi - s))
}

impl Turnstile<'_> {
    /// Advances one pane. Returns the index of the window's first pane and
    /// its sketch, with extrema recomputed from the member panes.
    pub fn advance(&mut self) -> Option<Result<(usize, &MomentsSketch)>> {
        let i = self.next;
        if i + self.width > self.panes.len() {
            return None;
        }
        self.next += 1;
        Some(self.step(i).map(|s| (i, s)))
    }

    fn apply(&mut self, pane: &MomentsSketch, sign: f64) {
        let values = pane.power_sums().iter().chain(pane.log_sums());
        for (acc, &v) in self.sums.iter_mut().zip(values) {
            *acc = add_dd(*acc, sign * v);
        }
    }

    fn step(&mut self, i: usize) -> Result<&MomentsSketch> {
        let members = &self.panes[i..i + self.width];
        if i == 0 {
            for p in members {
                self.apply(&p.sketch, 1.0);
                self.count += p.sketch.count();
            }
        } else {
            let (old, new) = (&self.panes[i - 1].sketch, &members[self.width - 1].sketch);
            self.apply(old, -1.0);
            self.apply(new, 1.0);
            self.count = self.count - old.count() + new.count();
        }
        let order = self.sums.len() / 2;
        let window = if self.count == 0 {
            MomentsSketch::new(order)?
        } else {
            let (lo, hi) = members
                .iter()
                .filter_map(Pane::extrema)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)));
            let sums: Vec<f64> = self.sums.iter().map(|&(h, l)| h + l).collect();
            MomentsSketch::from_parts(self.count, lo, hi, sums[..order].to_vec(), sums[order..].to_vec())?
        };
        Ok(self.window.insert(window))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub first_pane: usize,
    pub start: f64,
    pub end: f64,
    pub count: u64,
    /// `None` for windows with no values.
    pub outcome: Option<ThresholdOutcome>,
}

impl WindowResult {
    pub fn flagged(&self) -> bool {
        self.outcome.as_ref().is_some_and(|o| o.decision == Some(true))
    }

    pub fn indeterminate(&self) -> bool {
        self.outcome.as_ref().is_some_and(ThresholdOutcome::is_indeterminate)
    }
}

#[derive(Debug, Clone)]
pub struct WindowReport {
    pub windows: Vec<WindowResult>,
    pub stats: CascadeStats,
}

impl WindowReport {
    pub fn flagged(&self) -> impl Iterator<Item = &WindowResult> {
        self.windows.iter().filter(|w| w.flagged())
    }
}

/// Evaluates `q̂_φ > t` on every window of `window_width`, sliding one pane
/// at a time.
pub fn query_sliding_window(
    series: &PaneSeries,
    window_width: f64,
    phi: f64,
    t: f64,
    config: &SolverConfig,
) -> Result<WindowReport> {
    let w = series.panes_per_window(window_width)?;
    let mut stats = CascadeStats::new();
    let mut windows = Vec::new();
    let mut turnstile = series.turnstile(w);
    while let Some(step) = turnstile.advance() {
        let (i, sketch) = step?;
        let outcome = match sketch.is_empty() {
            true => None,
            false => Some(stats.threshold(sketch, t, phi, config)?),
        };
        let start = series.panes[i].start;
        windows.push(WindowResult {
            first_pane: i,
            start,
            end: start + window_width,
            count: sketch.count(),
            outcome,
        });
    }
    Ok(WindowReport { windows, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_panes_flag_every_window() {
        let points: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 5.0)).collect();
        let s = PaneSeries::from_points(&points, 10.0, 8).unwrap();
        assert_eq!(s.len(), 10);
        let r = query_sliding_window(&s, 30.0, 0.5, 4.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.windows.len(), 8);
        assert!(r.windows.iter().all(WindowResult::flagged));
    }

    #[test]
    fn gaps_become_empty_panes() {
        let points = [(5.0, 1.0), (35.0, 2.0), (12.0, 3.0)];
        let s = PaneSeries::from_points(&points, 10.0, 4).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.panes()[2].sketch.is_empty());
        assert_eq!(s.panes()[3].start, 30.0);
        let r = query_sliding_window(&s, 10.0, 0.5, 0.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.windows.len(), 4);
        assert!(r.windows[2].outcome.is_none());
    }

    #[test]
    fn turnstile_extrema_follow_members() {
        let points: Vec<(f64, f64)> = (0..60).map(|i| (i as f64, (i * 7 % 13) as f64 + i as f64)).collect();
        let s = PaneSeries::from_points(&points, 5.0, 6).unwrap();
        let mut ts = s.turnstile(3);
        while let Some(step) = ts.advance() {
            let (i, w) = step.unwrap();
            let members: Vec<f64> = points[i * 5..(i + 3) * 5].iter().map(|p| p.1).collect();
            assert!(!w.extrema_stale());
            assert_eq!(w.min(), members.iter().cloned().fold(f64::INFINITY, f64::min));
            assert_eq!(w.max(), members.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            assert_eq!(w.count(), 15);
        }
    }

    #[test]
    fn window_must_be_a_multiple() {
        let s = PaneSeries::from_points(&[(0.0, 1.0)], 10.0, 4).unwrap();
        assert!(s.panes_per_window(25.0).is_err());
        assert!(s.panes_per_window(0.0).is_err());
        assert_eq!(s.panes_per_window(40.0).unwrap(), 4);
    }

    #[test]
    fn csv_input() {
        let csv = "time,value\n0,1\n1,2\nbad,3\n11,4\n";
        let (s, report) = PaneSeries::from_csv(csv.as_bytes(), "time", "value", 10.0, 4).unwrap();
        assert_eq!(report, IngestReport { rows: 3, skipped: 1 });
        assert_eq!(s.len(), 2);
    }
}
