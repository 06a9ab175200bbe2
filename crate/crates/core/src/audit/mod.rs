//! Turning per-sample scores into an audit: calibration, metrics, ROC,
//! aggregation across restoration tasks and the loss-threshold baseline.

mod aggregate;
mod metrics;
mod report;

pub use aggregate::{aggregate, mean, median, Aggregated, AggregationStrategy};
pub use metrics::{
    calibrate_threshold, compute_auc, compute_metrics, predict, roc_points, tpr_at_fpr,
    trapezoid_auc, ClassMetrics, Confusion, RocPoint,
};
pub use report::{
    evaluate_scores, AggregateReport, AuditReport, SampleRecord, TaskReport, FPR_CAPS,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::diffusion::training_loss;
use crate::error::Result;
use crate::numerics::{gaussian_like, Grid, SeededRng};
use crate::schedule::NoiseSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Member,
    Nonmember,
}

impl Label {
    pub fn is_member(&self) -> bool {
        matches!(self, Label::Member)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Member => "member",
            Label::Nonmember => "nonmember",
        }
    }

    pub fn from_member(member: bool) -> Self {
        if member {
            Label::Member
        } else {
            Label::Nonmember
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Calibration,
    Evaluation,
}

/// Scores of one sample, keyed by task id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub label: Label,
    pub scores: BTreeMap<String, f64>,
}

/// Negated denoising loss at a fixed timestep with noise from `(seed, stream)`;
/// larger means more member-like.
pub fn naive_loss_score(
    den: &dyn Denoiser,
    x: &Grid,
    t: usize,
    sched: &NoiseSchedule,
    seed: u64,
    stream: u64,
) -> Result<f64> {
    let eps = gaussian_like(&mut SeededRng::new(seed, stream), x);
    training_loss(den, x, t, &eps, sched).map(|l| -l)
}

/// Serializes non-finite thresholds as `"inf"` / `"-inf"` strings.
pub(crate) mod sentinel {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct SentinelVisitor;

    impl Visitor<'_> for SentinelVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number, \"inf\" or \"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("unexpected threshold {other}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(SentinelVisitor)
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Wrap>::deserialize(d).map(|o| o.map(|w| w.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::EmpiricalDenoiser;
    use crate::numerics::gaussian_grid;

    #[test]
    fn naive_loss_of_singleton_member_is_zero() {
        let s = NoiseSchedule::rescaled_linear(100).unwrap();
        let x = gaussian_grid(&mut SeededRng::new(1, 0), 4, 4, 1).unwrap();
        let d = EmpiricalDenoiser::new(vec![x.clone()], s.clone()).unwrap();
        let score = naive_loss_score(&d, &x, 30, &s, 5, 0).unwrap();
        assert!(score.abs() < 1e-9 && score <= 0.0);
        assert_eq!(score, naive_loss_score(&d, &x, 30, &s, 5, 0).unwrap());
    }

    #[test]
    fn sentinel_roundtrip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct T {
            #[serde(with = "sentinel")]
            v: f64,
        }
        for v in [0.25, f64::INFINITY, f64::NEG_INFINITY, -3.0] {
            let j = serde_json::to_string(&T { v }).unwrap();
            assert_eq!(serde_json::from_str::<T>(&j).unwrap(), T { v });
        }
        assert_eq!(
            serde_json::to_string(&T { v: f64::INFINITY }).unwrap(),
            r#"{"v":"inf"}"#
        );
    }
}
