//! Turning trial records into accuracy-vs-cost curves.
//!
//! Costs are normalized against the largest mean cost of a named reference
//! policy across its delta sweep, matching the benchmark protocol of
//! plotting normalized sample counts.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::TrialRecord;
use crate::error::{Error, Result};

/// One pooled (policy, delta) point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub policy: String,
    pub delta: f64,
    pub replications: u64,
    pub accuracy: f64,
    pub mean_cost: f64,
    /// Standard error of the mean cost.
    pub se_cost: f64,
    pub norm_cost: Option<f64>,
}

/// Pool records over instances and replications into per-(policy, delta)
/// points, sorted by policy then delta descending (sweep order).
pub fn pool_curves(records: &[TrialRecord]) -> Vec<CurvePoint> {
    let mut groups: Vec<(String, f64, Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        match groups
            .iter_mut()
            .find(|(p, d, _)| *p == r.policy && *d == r.delta)
        {
            Some((_, _, v)) => v.push(r),
            None => groups.push((r.policy.clone(), r.delta, vec![r])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.partial_cmp(&a.1).unwrap()));
    groups
        .into_iter()
        .map(|(policy, delta, rows)| {
            let n = rows.len() as f64;
            let correct = rows.iter().filter(|r| r.correct).count() as f64;
            let mean = rows.iter().map(|r| r.cost).sum::<f64>() / n;
            let var = if rows.len() > 1 {
                rows.iter()
                    .map(|r| (r.cost - mean) * (r.cost - mean))
                    .sum::<f64>()
                    / (n - 1.0)
            } else {
                0.0
            };
            CurvePoint {
                policy,
                delta,
                replications: rows.len() as u64,
                accuracy: correct / n,
                mean_cost: mean,
                se_cost: (var / n).sqrt(),
                norm_cost: None,
            }
        })
        .collect()
}

/// Fill `norm_cost` relative to the reference policy's largest mean cost.
pub fn normalize(points: &mut [CurvePoint], reference: &str) -> Result<()> {
    let largest = points
        .iter()
        .filter(|p| p.policy == reference)
        .map(|p| p.mean_cost)
        .fold(f64::NEG_INFINITY, f64::max);
    if !largest.is_finite() {
        return Err(Error::Config(format!(
            "reference policy `{reference}` not present in the records"
        )));
    }
    for p in points.iter_mut() {
        p.norm_cost = Some(p.mean_cost / largest);
    }
    Ok(())
}

/// Plot-data CSV: `policy,delta,accuracy,mean_cost,norm_cost`.
pub fn write_plot_csv<W: Write>(points: &[CurvePoint], mut out: W) -> Result<()> {
    writeln!(out, "policy,delta,accuracy,mean_cost,norm_cost")?;
    for p in points {
        let norm = p
            .norm_cost
            .map(|v| v.to_string())
            .unwrap_or_else(|| "".into());
        writeln!(
            out,
            "{},{},{},{},{}",
            p.policy, p.delta, p.accuracy, p.mean_cost, norm
        )?;
    }
    Ok(())
}

/// Mean cost (and standard error) of one policy at a target accuracy,
/// linearly interpolated along its delta sweep. When every point already
/// exceeds the target, the point with the lowest accuracy is used (a
/// conservative overestimate of the cost at the target).
pub fn cost_at_accuracy(
    points: &[CurvePoint],
    policy: &str,
    target: f64,
) -> Option<(f64, f64)> {
    let mut curve: Vec<&CurvePoint> = points.iter().filter(|p| p.policy == policy).collect();
    if curve.is_empty() {
        return None;
    }
    curve.sort_by(|a, b| a.accuracy.partial_cmp(&b.accuracy).unwrap());
    if curve.last().unwrap().accuracy < target {
        return None;
    }
    if curve[0].accuracy >= target {
        let p = curve
            .iter()
            .min_by(|a, b| a.accuracy.partial_cmp(&b.accuracy).unwrap())
            .unwrap();
        return Some((p.mean_cost, p.se_cost));
    }
    let mut below = curve[0];
    let mut above = *curve.last().unwrap();
    for p in &curve {
        if p.accuracy < target && p.accuracy >= below.accuracy {
            below = p;
        }
        if p.accuracy >= target && p.accuracy <= above.accuracy {
            above = p;
        }
    }
    let span = above.accuracy - below.accuracy;
    let w = if span > 0.0 {
        (target - below.accuracy) / span
    } else {
        1.0
    };
    let cost = below.mean_cost + w * (above.mean_cost - below.mean_cost);
    let se = below.se_cost.max(above.se_cost);
    Some((cost, se))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(policy: &str, delta: f64, correct: bool, cost: f64, rep: u64) -> TrialRecord {
        TrialRecord {
            instance_id: "i".into(),
            policy: policy.into(),
            delta,
            rep,
            true_h: "h0".into(),
            output_h: if correct { "h0" } else { "h1" }.into(),
            cost,
            steps: cost as u64,
            correct,
            seed: rep,
            capped: false,
        }
    }

    #[test]
    fn single_point_curve() {
        let records = vec![record("random", 0.1, true, 5.0, 0)];
        let mut points = pool_curves(&records);
        normalize(&mut points, "random").unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].accuracy, 1.0);
        assert_eq!(points[0].norm_cost, Some(1.0));
    }

    #[test]
    fn reference_largest_mean_maps_to_one() {
        let records = vec![
            record("random", 0.2, true, 10.0, 0),
            record("random", 0.05, true, 20.0, 1),
            record("fa-exp", 0.05, true, 5.0, 0),
        ];
        let mut points = pool_curves(&records);
        normalize(&mut points, "random").unwrap();
        for p in &points {
            match (p.policy.as_str(), p.delta) {
                ("random", d) if d == 0.05 => assert_eq!(p.norm_cost, Some(1.0)),
                ("random", _) => assert_eq!(p.norm_cost, Some(0.5)),
                ("fa-exp", _) => assert_eq!(p.norm_cost, Some(0.25)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn missing_reference_is_an_error() {
        let records = vec![record("fa-exp", 0.05, true, 5.0, 0)];
        let mut points = pool_curves(&records);
        assert!(normalize(&mut points, "random").is_err());
    }

    #[test]
    fn hand_built_curve_interpolates() {
        // Four records at two deltas: accuracy 0.5 at cost 2, accuracy 1.0
        // at cost 6 -> cost at 0.75 accuracy interpolates to 4.
        let records = vec![
            record("p", 0.3, true, 2.0, 0),
            record("p", 0.3, false, 2.0, 1),
            record("p", 0.05, true, 6.0, 0),
            record("p", 0.05, true, 6.0, 1),
        ];
        let points = pool_curves(&records);
        let (cost, _) = cost_at_accuracy(&points, "p", 0.75).unwrap();
        assert!((cost - 4.0).abs() < 1e-12);
        // Unattainable target.
        assert!(cost_at_accuracy(&points, "p", 1.01).is_none());
        // Target below every point: cheapest point wins.
        let (cost, _) = cost_at_accuracy(&points, "p", 0.2).unwrap();
        assert!((cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn plot_csv_shape() {
        let records = vec![record("p", 0.1, true, 3.0, 0)];
        let mut points = pool_curves(&records);
        normalize(&mut points, "p").unwrap();
        let mut buf = Vec::new();
        write_plot_csv(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "policy,delta,accuracy,mean_cost,norm_cost\np,0.1,1,3,1\n"
        );
    }
}
