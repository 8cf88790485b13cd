use super::{AdapterError, AdapterParams, Result, ScoreSeries};
use crate::dataset_io::WindowPlan;
use crate::scalar::Scalar;
use crate::similarity::BatchPartition;

/// Maps per-batch row scores back to timesteps. Padding rows are dropped;
/// a timestep covered by several rows (overlapping windows) gets the mean of
/// their scores.
pub fn assemble_series_scores<T: Scalar>(
    batch_scores: &[Vec<T>],
    partition: &BatchPartition,
    plan: &WindowPlan,
    params: AdapterParams,
) -> Result<ScoreSeries<T>> {
    if batch_scores.len() != partition.len() {
        return Err(AdapterError::PartitionMismatch(format!(
            "{} score vectors for {} batches",
            batch_scores.len(),
            partition.len()
        )));
    }
    let mut sums = vec![0.0f64; plan.series_len];
    let mut counts = vec![0u32; plan.series_len];
    for (b, scores) in batch_scores.iter().enumerate() {
        let timesteps = partition.row_timesteps(plan, b);
        if timesteps.len() != scores.len() {
            return Err(AdapterError::PartitionMismatch(format!(
                "batch {b} has {} scores for {} rows",
                scores.len(),
                timesteps.len()
            )));
        }
        for (t, s) in timesteps.into_iter().zip(scores) {
            if let Some(t) = t {
                sums[t] += s.widen();
                counts[t] += 1;
            }
        }
    }
    if let Some(t) = counts.iter().position(|&c| c == 0) {
        return Err(AdapterError::PartitionMismatch(format!("timestep {t} has no score")));
    }
    let scores = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| T::narrow(if c == 1 { s } else { s / c as f64 }))
        .collect();
    Ok(ScoreSeries { scores, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{plan_windows, TailPolicy};
    use crate::similarity::partition_batches;

    #[test]
    fn exact_tiling_two_batches() {
        let plan = plan_windows(1024, 512, 512, TailPolicy::PadRepeatLast).unwrap();
        let part = partition_batches(&plan, 1).unwrap();
        let scores = vec![vec![0.25f64; 512], vec![0.75f64; 512]];
        let out = assemble_series_scores(&scores, &part, &plan, AdapterParams::Mean).unwrap();
        assert_eq!(out.len(), 1024);
        assert_eq!(out.scores[511], 0.25);
        assert_eq!(out.scores[512], 0.75);
    }

    #[test]
    fn pads_are_dropped() {
        let plan = plan_windows(1000, 512, 512, TailPolicy::PadRepeatLast).unwrap();
        let part = partition_batches(&plan, 2).unwrap();
        let batch: Vec<f64> = (0..1024).map(|i| i as f64).collect();
        let out = assemble_series_scores(&[batch.clone()], &part, &plan, AdapterParams::Mean).unwrap();
        assert_eq!(out.len(), 1000);
        assert_eq!(out.scores, batch[..1000].to_vec());
    }

    #[test]
    fn overlapping_rows_are_averaged() {
        let plan = plan_windows(6, 4, 2, TailPolicy::PadRepeatLast).unwrap();
        // windows at 0 and 2 -> rows cover 0..4 and 2..6
        let part = partition_batches(&plan, 2).unwrap();
        let scores = vec![vec![0.0f64, 0.0, 1.0, 1.0, 0.0, 0.0, 3.0, 3.0]];
        let out = assemble_series_scores(&scores, &part, &plan, AdapterParams::Mean).unwrap();
        assert_eq!(out.scores, vec![0.0, 0.0, 0.5, 0.5, 3.0, 3.0]);
    }

    #[test]
    fn mismatches_are_reported() {
        let plan = plan_windows(8, 4, 4, TailPolicy::PadRepeatLast).unwrap();
        let part = partition_batches(&plan, 1).unwrap();
        assert!(assemble_series_scores(&[vec![0.0f64; 4]], &part, &plan, AdapterParams::Mean).is_err());
        assert!(assemble_series_scores(&[vec![0.0f64; 4], vec![0.0; 3]], &part, &plan, AdapterParams::Mean).is_err());
    }
}
