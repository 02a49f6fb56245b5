//! Evaluation metrics and the per-epoch metrics CSV.

use crate::recognition::LabelMode;
use crate::synthetic::VideoLabel;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Whether an averaged probability vector scores as correct: argmax match
/// for single-label, mean per-class 0.5-threshold accuracy for
/// multi-label (returned as a fraction in [0,1]).
pub fn accuracy_score(probs: &[f32], label: &VideoLabel, mode: LabelMode) -> f64 {
    match (mode, label) {
        (LabelMode::SingleLabel, VideoLabel::Single(l)) => {
            if argmax(probs) == *l {
                1.0
            } else {
                0.0
            }
        }
        (LabelMode::MultiLabel, VideoLabel::Multi(bits)) => {
            let correct = bits
                .iter()
                .zip(probs)
                .filter(|(b, p)| (**p >= 0.5) == (**b == 1))
                .count();
            correct as f64 / bits.len() as f64
        }
        _ => panic!("label kind does not match label mode"),
    }
}

/// Average precision by the rank-based formula: mean of precision@k over
/// the positive ranks. Ties broken by original index (stable). `None`
/// when the class has no positives.
pub fn average_precision(scores: &[f32], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len());
    let n_pos = positives.iter().filter(|p| **p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut ap = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        if positives[idx] {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(ap / n_pos as f64)
}

/// mAP over classes with at least one positive; 0 when no class has any.
pub fn mean_average_precision(
    per_video_probs: &[Vec<f32>],
    labels: &[VideoLabel],
    num_classes: usize,
) -> f64 {
    let mut aps = Vec::new();
    for c in 0..num_classes {
        let scores: Vec<f32> = per_video_probs.iter().map(|p| p[c]).collect();
        let positives: Vec<bool> = labels
            .iter()
            .map(|l| match l {
                VideoLabel::Single(x) => *x == c,
                VideoLabel::Multi(bits) => bits[c] == 1,
            })
            .collect();
        if let Some(ap) = average_precision(&scores, &positives) {
            aps.push(ap);
        }
    }
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

/// Append-only metrics CSV: `epoch,split,loss,top1,mAP,wall_s`.
pub struct MetricsCsv {
    path: PathBuf,
}

impl MetricsCsv {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        fs::write(path, "epoch,split,loss,top1,mAP,wall_s\n")?;
        Ok(MetricsCsv {
            path: path.to_path_buf(),
        })
    }

    pub fn append(
        &self,
        epoch: usize,
        split: &str,
        loss: f64,
        top1: f64,
        map: f64,
        wall_s: f64,
    ) -> std::io::Result<()> {
        let mut f = fs::OpenOptions::new().append(true).open(&self.path)?;
        writeln!(
            f,
            "{epoch},{split},{loss:.6},{top1:.6},{map:.6},{wall_s:.3}"
        )
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Strips the wall-clock column, leaving only the deterministic fields;
/// used by reproducibility checks that compare two runs byte-wise.
pub fn csv_without_wall(path: &Path) -> std::io::Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            fields[..fields.len().saturating_sub(1)].join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_matches_hand_computed_ranking() {
        // scores .9/.8/.2/.1 with labels 1/0/1/0:
        // positives at ranks 1 and 3 -> AP = (1/1 + 2/3) / 2
        let ap = average_precision(&[0.9, 0.8, 0.2, 0.1], &[true, false, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-9);
        assert!((ap - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn perfect_ranking_has_ap_one() {
        let ap = average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap();
        assert!((ap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_positives_is_none() {
        assert!(average_precision(&[0.5, 0.4], &[false, false]).is_none());
    }

    #[test]
    fn map_over_single_label_videos() {
        let probs = vec![
            vec![0.8, 0.2],
            vec![0.3, 0.7],
            vec![0.6, 0.4],
        ];
        let labels = vec![
            VideoLabel::Single(0),
            VideoLabel::Single(1),
            VideoLabel::Single(1),
        ];
        let map = mean_average_precision(&probs, &labels, 2);
        // class 0: scores .8/.3/.6, positive idx 0 -> rank 1 -> AP 1.0
        // class 1: scores .2/.7/.4, positives idx 1 (rank 1), idx 2 (rank 2) -> AP 1.0
        assert!((map - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_format_and_wall_stripping() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let csv = MetricsCsv::create(&p).unwrap();
        csv.append(0, "train", 1.5, 0.5, 0.25, 12.345).unwrap();
        csv.append(0, "val", 1.2, 0.6, 0.3, 0.001).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("epoch,split,loss,top1,mAP,wall_s\n"));
        assert_eq!(text.lines().count(), 3);
        let stripped = csv_without_wall(&p).unwrap();
        assert!(stripped.contains("0,train,1.500000,0.500000,0.250000"));
        assert!(!stripped.contains("12.345"));
    }
}
