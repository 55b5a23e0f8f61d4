use crate::error::{Error, Result};

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    Ok(())
}

/// Percentage of matching positions.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if truth.is_empty() {
        return Err(Error::invalid("accuracy of an empty sequence"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Per-class IoU in percent; `None` for classes absent from both sequences.
pub fn class_iou(pred: &[usize], truth: &[usize], classes: usize) -> Result<Vec<Option<f64>>> {
    check_lengths(pred, truth)?;
    let (mut tp, mut fp, mut fn_) = (vec![0usize; classes], vec![0usize; classes], vec![0usize; classes]);
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::invalid(format!("label {} outside {classes} classes", p.max(t))));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    Ok((0..classes)
        .map(|c| {
            let denom = tp[c] + fp[c] + fn_[c];
            (denom > 0).then(|| 100.0 * tp[c] as f64 / denom as f64)
        })
        .collect())
}

/// Mean IoU over the classes that occur in either sequence.
pub fn mean_iou(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    let ious: Vec<f64> = class_iou(pred, truth, classes)?.into_iter().flatten().collect();
    if ious.is_empty() {
        return Err(Error::invalid("mIoU of an empty sequence"));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Maximal constant runs as `(label, start, end)` with `end` exclusive.
pub fn segments(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == l => last.2 = i + 1,
            _ => out.push((l, i, i + 1)),
        }
    }
    out
}

fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Segmental edit score: `(1 - lev(segments) / max segment count) * 100`.
pub fn edit_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if truth.is_empty() {
        return Err(Error::invalid("edit score of an empty sequence"));
    }
    let p: Vec<usize> = segments(pred).into_iter().map(|s| s.0).collect();
    let t: Vec<usize> = segments(truth).into_iter().map(|s| s.0).collect();
    Ok((1.0 - levenshtein(&p, &t) as f64 / p.len().max(t.len()) as f64) * 100.0)
}

/// Segmental F1 at overlap threshold `tau`. Each predicted segment is matched to
/// its best-IoU true segment of the same label; it counts as a true positive when
/// that IoU reaches `tau` and the true segment is still unmatched.
pub fn segmental_f1(pred: &[usize], truth: &[usize], tau: f64) -> Result<f64> {
    check_lengths(pred, truth)?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("overlap threshold must lie in (0, 1], got {tau}")));
    }
    let ps = segments(pred);
    let ts = segments(truth);
    let mut matched = vec![false; ts.len()];
    let mut tp = 0usize;
    for &(label, s, e) in &ps {
        let best = ts
            .iter()
            .enumerate()
            .filter(|(_, t)| t.0 == label)
            .map(|(j, &(_, ts_, te))| {
                let inter = e.min(te).saturating_sub(s.max(ts_));
                let union = e.max(te) - s.min(ts_);
                (j, inter as f64 / union as f64)
            })
            .fold(None::<(usize, f64)>, |acc, (j, iou)| match acc {
                Some((_, b)) if b >= iou => acc,
                _ => Some((j, iou)),
            });
        if let Some((j, iou)) = best {
            if iou >= tau && !matched[j] {
                matched[j] = true;
                tp += 1;
            }
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / ps.len() as f64;
    let recall = tp as f64 / ts.len() as f64;
    Ok(200.0 * precision * recall / (precision + recall))
}

/// The three overlap thresholds reported for segmentation.
pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> Vec<usize> {
        s.bytes().map(|b| (b - b'A') as usize).collect()
    }

    #[test]
    fn accuracy_and_iou_by_hand() {
        assert_eq!(accuracy(&[0, 0], &[0, 1]).unwrap(), 50.0);
        let iou = class_iou(&[0, 0], &[0, 1], 2).unwrap();
        assert_eq!(iou, vec![Some(50.0), Some(0.0)]);
        assert_eq!(mean_iou(&[0, 0], &[0, 1], 2).unwrap(), 25.0);
        // class 2 absent from both: excluded
        assert_eq!(mean_iou(&[0, 1], &[0, 1], 3).unwrap(), 100.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(mean_iou(&[3], &[0], 2).is_err());
    }

    #[test]
    fn edit_score_examples() {
        assert_eq!(edit_score(&seq("AABB"), &seq("AABB")).unwrap(), 100.0);
        let s = edit_score(&seq("ABBA"), &seq("AABB")).unwrap();
        assert!((s - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(edit_score(&seq("AAAA"), &seq("BBBB")).unwrap(), 0.0);
        assert!(edit_score(&[], &[]).is_err());
    }

    #[test]
    fn f1_boundary_at_iou_point_four() {
        let (truth, pred) = (seq("AAAAABBBBB"), seq("AABBBBBBBB"));
        let f: Vec<f64> = F1_THRESHOLDS.iter().map(|&t| segmental_f1(&pred, &truth, t).unwrap()).collect();
        assert_eq!(f, vec![100.0, 100.0, 50.0]);
        assert_eq!(segmental_f1(&[], &[], 0.5).unwrap(), 0.0);
        assert!(segmental_f1(&pred, &truth, 0.0).is_err());
        assert!(segmental_f1(&pred, &truth, 1.5).is_err());
    }

    #[test]
    fn segments_collapse_runs() {
        assert_eq!(segments(&seq("AABAA")), vec![(0, 0, 2), (1, 2, 3), (0, 3, 5)]);
        assert!(segments(&[]).is_empty());
    }
}
