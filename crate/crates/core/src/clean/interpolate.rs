use std::ops::Range;

use super::frame::RawScadaFrame;
use super::labels::{OutlierLabeling, Reason, Verdict};

/// Maximal runs of at most `max_gap` rejected rows that have a kept,
/// time-contiguous anchor on each side. Runs containing a `RANGE` rejection
/// are never returned.
pub(crate) fn fillable_runs(frame: &RawScadaFrame, labels: &OutlierLabeling, max_gap: usize) -> Vec<Range<usize>> {
    let n = frame.len();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        if labels.is_keep(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !labels.is_keep(i) {
            i += 1;
        }
        let run = start..i;
        let anchored = start > 0 && i < n;
        if anchored
            && run.len() <= max_gap
            && (start - 1..i).all(|j| frame.consecutive(j))
            && run.clone().all(|j| labels.verdicts[j] != Verdict::Reject(Reason::Range))
        {
            runs.push(run);
        }
    }
    runs
}

/// Overwrite every channel (and pitch) on `run` with the straight line between
/// the anchors at `run.start - 1` and `run.end`.
pub(crate) fn fill_run(frame: &mut RawScadaFrame, run: &Range<usize>) {
    let (a, b) = (run.start - 1, run.end);
    let steps = (b - a) as f64;
    let lerp = |v: &mut Vec<f64>| {
        let (va, vb) = (v[a], v[b]);
        for j in run.clone() {
            v[j] = va + (vb - va) * ((j - a) as f64 / steps);
        }
    };
    for ch in frame.channels.iter_mut() {
        lerp(ch);
    }
    if let Some(p) = frame.pitch.as_mut() {
        lerp(p);
    }
}

/// Replace short rejected runs bounded by kept rows with linear interpolation
/// and relabel them `KEEP`. Longer runs, runs at either end of the frame,
/// runs spanning a timestamp jump and runs containing a `RANGE` rejection are
/// left unchanged.
pub fn interpolate_short_gaps(
    frame: &RawScadaFrame,
    labels: &OutlierLabeling,
    max_gap: usize,
) -> (RawScadaFrame, OutlierLabeling) {
    let mut f = frame.clone();
    let mut l = labels.clone();
    for run in fillable_runs(frame, labels, max_gap) {
        fill_run(&mut f, &run);
        for j in run {
            l.verdicts[j] = Verdict::Keep;
        }
    }
    (f, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(v: &[f64]) -> RawScadaFrame {
        let n = v.len();
        RawScadaFrame::new(
            "T",
            (0..n as i64).map(|i| i * 600).collect(),
            [v.to_vec(), v.to_vec(), v.to_vec(), v.to_vec()],
            None,
        )
        .unwrap()
    }

    fn labels(rejected: &[usize], n: usize, reason: Reason) -> OutlierLabeling {
        let mut l = OutlierLabeling::all_keep(n);
        for &i in rejected {
            l.reject_if_kept(i, reason);
        }
        l
    }

    #[test]
    fn midpoint() {
        let f = frame(&[2.0, 100.0, 4.0]);
        let (g, l) = interpolate_short_gaps(&f, &labels(&[1], 3, Reason::Lof), 1);
        assert_eq!(g.channels[1], vec![2.0, 3.0, 4.0]);
        assert!(l.is_keep(1));
    }

    #[test]
    fn long_runs_boundaries_and_range_are_left_alone() {
        let f = frame(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let l = labels(&[1, 2, 3, 4, 5], 7, Reason::Lof);
        assert_eq!(interpolate_short_gaps(&f, &l, 3).1, l);
        let l = labels(&[0], 7, Reason::Missing);
        assert_eq!(interpolate_short_gaps(&f, &l, 3).1, l);
        let l = labels(&[3], 7, Reason::Range);
        assert_eq!(interpolate_short_gaps(&f, &l, 3).1, l);
    }

    #[test]
    fn timestamp_jump_blocks_fill() {
        let f = RawScadaFrame::new("T", vec![0, 600, 1800], [vec![0.0, f64::NAN, 2.0], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]], None)
            .unwrap();
        let l = labels(&[1], 3, Reason::Missing);
        assert_eq!(interpolate_short_gaps(&f, &l, 3).1, l);
    }

    #[test]
    fn nan_gap_is_filled_linearly() {
        let f = frame(&[0.0, f64::NAN, f64::NAN, 3.0]);
        let (g, l) = interpolate_short_gaps(&f, &labels(&[1, 2], 4, Reason::Missing), 3);
        assert_eq!(g.channels[0], vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(l.keep_count(), 4);
    }
}
