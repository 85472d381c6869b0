use crate::clean::{segment_and_window, OutlierLabeling, RawScadaFrame, WindowSample, DEFAULT_STRIDE};
use crate::error::{Error, Result};

/// How a time span is divided into train, validation and test periods.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitSpec {
    /// Relative lengths of the three periods, in order.
    Ratios([f64; 3]),
    /// Explicit period starts (epoch seconds).
    Boundaries { validation_start: i64, test_start: i64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Ratios([6.0, 3.0, 3.0])
    }
}

/// Half-open periods `[start, validation_start)`, `[validation_start,
/// test_start)` and `[test_start, end)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SplitBounds {
    pub start: i64,
    pub validation_start: i64,
    pub test_start: i64,
    pub end: i64,
}

impl SplitSpec {
    pub fn resolve(&self, start: i64, end: i64) -> Result<SplitBounds> {
        if end <= start {
            return Err(Error::invalid(format!("empty time span {start}..{end}")));
        }
        let (validation_start, test_start) = match *self {
            SplitSpec::Ratios(r) => {
                if r.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || r.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::invalid(format!("split ratios {r:?} must be non-negative with a positive sum")));
                }
                let total: f64 = r.iter().sum();
                let span = (end - start) as f64;
                let at = |f: f64| start + (span * f / total).round() as i64;
                (at(r[0]), at(r[0] + r[1]))
            }
            SplitSpec::Boundaries { validation_start, test_start } => {
                if validation_start > test_start {
                    return Err(Error::invalid(format!(
                        "validation start {validation_start} is after test start {test_start}"
                    )));
                }
                (validation_start, test_start)
            }
        };
        Ok(SplitBounds {
            start,
            validation_start,
            test_start,
            end,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    pub warnings: Vec<String>,
}

impl<T> Default for Splits<T> {
    fn default() -> Self {
        Self {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

impl<T> Splits<T> {
    pub fn extend(&mut self, other: Splits<T>) {
        self.train.extend(other.train);
        self.validation.extend(other.validation);
        self.test.extend(other.test);
        self.warnings.extend(other.warnings);
    }

    fn warn_empty(&mut self) {
        for (name, empty) in [
            ("train", self.train.is_empty()),
            ("validation", self.validation.is_empty()),
            ("test", self.test.is_empty()),
        ] {
            if empty {
                self.warnings.push(format!("{name} split is empty"));
            }
        }
    }
}

/// Assign samples to periods by window start. Order within each split
/// follows the input order.
pub fn build_splits(samples: Vec<WindowSample>, spec: &SplitSpec) -> Result<Splits<WindowSample>> {
    let mut out = Splits::default();
    if samples.is_empty() {
        out.warn_empty();
        return Ok(out);
    }
    let start = samples.iter().map(|s| s.start).min().expect("non-empty");
    let end = samples.iter().map(|s| s.end() + s.interval).max().expect("non-empty");
    let b = spec.resolve(start, end)?;
    for s in samples {
        if s.start < b.validation_start {
            out.train.push(s);
        } else if s.start < b.test_start {
            out.validation.push(s);
        } else {
            out.test.push(s);
        }
    }
    out.warn_empty();
    Ok(out)
}

/// Window strides per split. Test windows default to stride 1.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct WindowStrides {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for WindowStrides {
    fn default() -> Self {
        Self {
            train: DEFAULT_STRIDE,
            validation: DEFAULT_STRIDE,
            test: 1,
        }
    }
}

/// Cut one turbine's cleaned rows into periods first, then window each period
/// with its own stride, so no window crosses a period boundary.
pub fn windowed_splits(
    frame: &RawScadaFrame,
    labels: &OutlierLabeling,
    bounds: &SplitBounds,
    window: usize,
    strides: WindowStrides,
) -> Result<Splits<WindowSample>> {
    if labels.len() != frame.len() {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), frame.len())));
    }
    let period = |lo: i64, hi: i64, stride: usize| -> Result<Vec<WindowSample>> {
        let inside = |i: usize| (lo..hi).contains(&frame.timestamps[i]);
        let sub = frame.select(inside);
        let sub_labels = OutlierLabeling {
            verdicts: (0..frame.len()).filter(|&i| inside(i)).map(|i| labels.verdicts[i]).collect(),
            warnings: Vec::new(),
        };
        segment_and_window(&sub, &sub_labels, window, stride)
    };
    let mut out = Splits {
        train: period(bounds.start, bounds.validation_start, strides.train)?,
        validation: period(bounds.validation_start, bounds.test_start, strides.validation)?,
        test: period(bounds.test_start, bounds.end, strides.test)?,
        warnings: Vec::new(),
    };
    out.warn_empty();
    for w in &mut out.warnings {
        *w = format!("{}: {w}", frame.turbine_id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: i64 = 86_400;

    fn sample(start: i64) -> WindowSample {
        WindowSample::new("T", start, 600, vec![0.0; 8]).unwrap()
    }

    #[test]
    fn six_three_three_months() {
        let b = SplitSpec::default().resolve(0, 360 * DAY).unwrap();
        assert_eq!((b.validation_start, b.test_start), (180 * DAY, 270 * DAY));
    }

    #[test]
    fn samples_before_boundary_leave_later_splits_empty() {
        let spec = SplitSpec::Boundaries {
            validation_start: 10 * DAY,
            test_start: 20 * DAY,
        };
        let s = build_splits((0..5).map(|i| sample(i * 600)).collect(), &spec).unwrap();
        assert_eq!(s.train.len(), 5);
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn single_sample_lands_once() {
        let s = build_splits(vec![sample(0)], &SplitSpec::default()).unwrap();
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 1);
    }

    #[test]
    fn windows_never_cross_periods() {
        let n = 300;
        let ts: Vec<i64> = (0..n as i64).map(|i| i * 600).collect();
        let f = RawScadaFrame::new("T", ts, std::array::from_fn(|_| vec![1.0; n]), None).unwrap();
        let b = SplitSpec::default().resolve(0, n as i64 * 600).unwrap();
        let strides = WindowStrides { train: 10, validation: 10, test: 1 };
        let s = windowed_splits(&f, &OutlierLabeling::all_keep(n), &b, 50, strides).unwrap();
        assert_eq!(s.train.len(), (150 - 50) / 10 + 1);
        assert_eq!(s.test.len(), 75 - 50 + 1);
        for (w, lo, hi) in [(&s.train, b.start, b.validation_start), (&s.test, b.test_start, b.end)] {
            assert!(w.iter().all(|x| x.start >= lo && x.end() < hi));
        }
    }
}
