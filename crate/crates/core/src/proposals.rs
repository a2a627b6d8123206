//! Multi-threshold actionness grouping, a simplified stand-in for temporal
//! actionness grouping (TAG): at each threshold, every maximal run of
//! timesteps whose actionness reaches the threshold becomes a proposal.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::segment::Segment;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Proposals sorted by start, then length, with exact duplicates removed.
pub fn actionness_grouping(actionness: &[f64], thresholds: &[f64]) -> Result<Vec<Segment>> {
    if actionness.is_empty() {
        return Err(Error::InvalidInput("empty actionness signal".into()));
    }
    if let Some(v) = actionness.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!(
            "actionness value {v} outside [0, 1]"
        )));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::InvalidInput(format!("threshold {t} outside (0, 1)")));
    }
    let mut out: Vec<Segment> = Vec::new();
    for &thr in thresholds {
        let mut run_start = None;
        for (t, &a) in actionness.iter().chain(core::iter::once(&-1.0)).enumerate() {
            match (run_start, a >= thr) {
                (None, true) => run_start = Some(t),
                (Some(s), false) => {
                    out.push(Segment::new(s as f64, t as f64)?);
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    out.sort_by(|a, b| {
        a.start()
            .total_cmp(&b.start())
            .then(a.len().total_cmp(&b.len()))
    });
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn silence_gives_nothing() {
        assert!(actionness_grouping(&[0.0; 30], &DEFAULT_THRESHOLDS)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_run() {
        let mut a = vec![0.0; 40];
        a[10..20].iter_mut().for_each(|v| *v = 1.0);
        let p = actionness_grouping(&a, &[0.5]).unwrap();
        assert_eq!(p, vec![Segment::new(10.0, 20.0).unwrap()]);
    }

    #[test]
    fn run_touching_the_end() {
        let mut a = vec![0.0; 10];
        a[7..].iter_mut().for_each(|v| *v = 0.9);
        let p = actionness_grouping(&a, &[0.5]).unwrap();
        assert_eq!(p, vec![Segment::new(7.0, 10.0).unwrap()]);
    }

    #[test]
    fn two_runs_and_multiple_levels() {
        // levels: 0.6 on [2,5), 0.9 on [8,12), with a gap at 0.1
        let mut a = vec![0.1; 15];
        a[2..5].iter_mut().for_each(|v| *v = 0.6);
        a[8..12].iter_mut().for_each(|v| *v = 0.9);

        // loop oracle: enumerate runs at each threshold
        let runs = |thr: f64| {
            let mut v = vec![];
            let mut t = 0;
            while t < a.len() {
                if a[t] >= thr {
                    let s = t;
                    while t < a.len() && a[t] >= thr {
                        t += 1;
                    }
                    v.push((s, t));
                } else {
                    t += 1;
                }
            }
            v
        };
        assert_eq!(runs(0.5), vec![(2, 5), (8, 12)]);
        assert_eq!(runs(0.7), vec![(8, 12)]);

        let p = actionness_grouping(&a, &[0.5, 0.7]).unwrap();
        assert_eq!(
            p,
            vec![
                Segment::new(2.0, 5.0).unwrap(),
                Segment::new(8.0, 12.0).unwrap()
            ]
        );
    }

    #[test]
    fn nested_runs_sort_by_start_then_length() {
        let a = [0.0, 0.4, 0.8, 0.8, 0.4, 0.0];
        let p = actionness_grouping(&a, &[0.3, 0.7]).unwrap();
        assert_eq!(
            p,
            vec![
                Segment::new(1.0, 5.0).unwrap(),
                Segment::new(2.0, 4.0).unwrap()
            ]
        );
    }

    #[test]
    fn input_validation() {
        assert!(actionness_grouping(&[], &[0.5]).is_err());
        assert!(actionness_grouping(&[0.5, 1.2], &[0.5]).is_err());
        assert!(actionness_grouping(&[0.5], &[1.0]).is_err());
        assert!(actionness_grouping(&[0.5], &[0.0]).is_err());
    }
}
