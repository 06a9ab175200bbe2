//! Combining per-task scores into one decision per sample.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audit::ScoreRecord;
use crate::error::{DrcError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AggregationStrategy {
    Mean,
    Median,
    /// Member iff at least `agree_n` tasks classify member on their own.
    Vote {
        agree_n: usize,
    },
}

impl AggregationStrategy {
    pub fn name(&self) -> String {
        match self {
            AggregationStrategy::Mean => "mean".into(),
            AggregationStrategy::Median => "median".into(),
            AggregationStrategy::Vote { agree_n } => format!("vote_{agree_n}"),
        }
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        match *self {
            AggregationStrategy::Vote { agree_n } if agree_n == 0 || agree_n > n_tasks => Err(
                DrcError::invalid(format!("agree number {agree_n} outside 1..={n_tasks}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Aggregated {
    /// A fresh score per sample, to be calibrated like any single task.
    Scores(Vec<f64>),
    /// Final member decisions.
    Decisions(Vec<bool>),
}

fn task_scores<'a>(
    record: &'a ScoreRecord,
    tasks: &'a [String],
) -> impl Iterator<Item = Result<f64>> + 'a {
    tasks.iter().map(move |t| {
        record.scores.get(t).copied().ok_or_else(|| {
            DrcError::invalid(format!(
                "sample {} has no score for task {t}",
                record.sample_id
            ))
        })
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Aggregates `records` over `tasks`. Votes use `thresholds[task]` with the
/// usual `score >= threshold` rule.
pub fn aggregate(
    records: &[ScoreRecord],
    tasks: &[String],
    strategy: AggregationStrategy,
    thresholds: &BTreeMap<String, f64>,
) -> Result<Aggregated> {
    if tasks.is_empty() {
        return Err(DrcError::invalid("aggregation needs at least one task"));
    }
    strategy.validate(tasks.len())?;
    match strategy {
        AggregationStrategy::Mean | AggregationStrategy::Median => {
            let f = if strategy == AggregationStrategy::Mean {
                mean
            } else {
                median
            };
            let scores = records
                .iter()
                .map(|r| {
                    task_scores(r, tasks)
                        .collect::<Result<Vec<f64>>>()
                        .map(|v| f(&v))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Aggregated::Scores(scores))
        }
        AggregationStrategy::Vote { agree_n } => {
            let thr: Vec<f64> = tasks
                .iter()
                .map(|t| {
                    thresholds
                        .get(t)
                        .copied()
                        .ok_or_else(|| DrcError::invalid(format!("no threshold for task {t}")))
                })
                .collect::<Result<_>>()?;
            let decisions = records
                .iter()
                .map(|r| {
                    let votes = task_scores(r, tasks)
                        .zip(&thr)
                        .map(|(s, &th)| s.map(|s| usize::from(s >= th)))
                        .sum::<Result<usize>>()?;
                    Ok(votes >= agree_n)
                })
                .collect::<Result<Vec<bool>>>()?;
            Ok(Aggregated::Decisions(decisions))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::Label;

    fn record(id: &str, scores: &[(&str, f64)]) -> ScoreRecord {
        ScoreRecord {
            sample_id: id.into(),
            label: Label::Member,
            scores: scores.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn tasks(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn mean_and_median() {
        let r = vec![record("a", &[("x", 0.2), ("y", 0.8), ("z", 0.5)])];
        let t = tasks(&["x", "y", "z"]);
        let none = BTreeMap::new();
        assert_eq!(
            aggregate(&r, &t, AggregationStrategy::Mean, &none).unwrap(),
            Aggregated::Scores(vec![0.5])
        );
        assert_eq!(
            aggregate(&r, &t, AggregationStrategy::Median, &none).unwrap(),
            Aggregated::Scores(vec![0.5])
        );
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn single_task_vote_is_that_task() {
        let r = vec![record("a", &[("x", 0.7)]), record("b", &[("x", 0.2)])];
        let thr = BTreeMap::from([("x".to_string(), 0.5)]);
        assert_eq!(
            aggregate(
                &r,
                &tasks(&["x"]),
                AggregationStrategy::Vote { agree_n: 1 },
                &thr
            )
            .unwrap(),
            Aggregated::Decisions(vec![true, false])
        );
    }

    #[test]
    fn vote_counts() {
        let names = ["a", "b", "c", "d", "e"];
        let scores: Vec<(&str, f64)> = names
            .iter()
            .zip([0.9, 0.9, 0.9, 0.1, 0.1])
            .map(|(n, s)| (*n, s))
            .collect();
        let r = vec![record("s", &scores)];
        let thr: BTreeMap<String, f64> = names.iter().map(|n| (n.to_string(), 0.5)).collect();
        let t = tasks(&names);
        let vote = |n| aggregate(&r, &t, AggregationStrategy::Vote { agree_n: n }, &thr).unwrap();
        assert_eq!(vote(3), Aggregated::Decisions(vec![true]));
        assert_eq!(vote(4), Aggregated::Decisions(vec![false]));
        assert!(aggregate(&r, &t, AggregationStrategy::Vote { agree_n: 6 }, &thr).is_err());
        assert!(aggregate(&r, &t, AggregationStrategy::Vote { agree_n: 0 }, &thr).is_err());
    }

    #[test]
    fn missing_scores_are_errors() {
        let r = vec![record("a", &[("x", 0.7)])];
        assert!(aggregate(
            &r,
            &tasks(&["x", "y"]),
            AggregationStrategy::Mean,
            &BTreeMap::new()
        )
        .is_err());
    }

    #[test]
    fn json_forms() {
        let s: AggregationStrategy =
            serde_json::from_str(r#"{"kind":"vote","agree_n":3}"#).unwrap();
        assert_eq!(s, AggregationStrategy::Vote { agree_n: 3 });
        assert_eq!(s.name(), "vote_3");
        let s: AggregationStrategy = serde_json::from_str(r#"{"kind":"median"}"#).unwrap();
        assert_eq!(s, AggregationStrategy::Median);
    }
}
