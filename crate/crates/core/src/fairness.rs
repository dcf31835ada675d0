//! Group fairness metrics over binary predictions.
//!
//! The favourable outcome is [`Label::Good`]; "positive" below always means a
//! good prediction or a good ground-truth label. A metric whose denominator
//! is empty for either group is undefined and reported as `None`, never 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Group, Label};

/// Confusion counts for one sensitive group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub size: usize,
    pub predicted_positive: usize,
    pub true_positive: usize,
    pub false_positive: usize,
    pub condition_positive: usize,
    pub condition_negative: usize,
    pub correct: usize,
}

impl GroupOutcome {
    /// Per-group outcomes, indexed by [`Group::index`].
    pub fn tally(predictions: &[Label], labels: &[Label], groups: &[Group]) -> Result<[GroupOutcome; 2]> {
        if predictions.len() != labels.len() || labels.len() != groups.len() {
            return Err(Error::InvalidGraph(format!(
                "length mismatch: {} predictions, {} labels, {} groups",
                predictions.len(),
                labels.len(),
                groups.len()
            )));
        }
        let mut out = [GroupOutcome::default(); 2];
        for ((&p, &y), &g) in predictions.iter().zip(labels).zip(groups) {
            let o = &mut out[g.index()];
            o.size += 1;
            let pos = p == Label::Good;
            let actual = y == Label::Good;
            o.predicted_positive += usize::from(pos);
            o.condition_positive += usize::from(actual);
            o.condition_negative += usize::from(!actual);
            o.true_positive += usize::from(pos && actual);
            o.false_positive += usize::from(pos && !actual);
            o.correct += usize::from(p == y);
        }
        Ok(out)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// A rate for each group and their absolute difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub majority: f64,
    pub minority: f64,
    pub delta: f64,
}

impl GroupComparison {
    fn from_rates(majority: Option<f64>, minority: Option<f64>) -> Option<Self> {
        let (a, b) = (majority?, minority?);
        Some(GroupComparison {
            majority: a,
            minority: b,
            delta: (a - b).abs(),
        })
    }

    pub fn get(&self, group: Group) -> f64 {
        match group {
            Group::Majority => self.majority,
            Group::Minority => self.minority,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMetric {
    StatisticalParity,
    EqualOpportunity,
    FalsePositiveRate,
    Accuracy,
}

impl FairnessMetric {
    pub const ALL: [FairnessMetric; 4] = [
        FairnessMetric::StatisticalParity,
        FairnessMetric::EqualOpportunity,
        FairnessMetric::FalsePositiveRate,
        FairnessMetric::Accuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FairnessMetric::StatisticalParity => "statistical_parity",
            FairnessMetric::EqualOpportunity => "equal_opportunity",
            FairnessMetric::FalsePositiveRate => "false_positive_rate",
            FairnessMetric::Accuracy => "accuracy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

fn undefined(metric: FairnessMetric, why: &str) -> Error {
    Error::UndefinedMetric(format!("{}: {why}", metric.name()))
}

/// `P(pred = good | group)` per group.
pub fn statistical_parity(predictions: &[Label], groups: &[Group]) -> Result<GroupComparison> {
    let labels = vec![Label::Good; predictions.len()];
    let [a, b] = GroupOutcome::tally(predictions, &labels, groups)?;
    GroupComparison::from_rates(ratio(a.predicted_positive, a.size), ratio(b.predicted_positive, b.size))
        .ok_or_else(|| undefined(FairnessMetric::StatisticalParity, "a group is empty"))
}

/// True positive rate per group.
pub fn equal_opportunity(predictions: &[Label], labels: &[Label], groups: &[Group]) -> Result<GroupComparison> {
    let [a, b] = GroupOutcome::tally(predictions, labels, groups)?;
    GroupComparison::from_rates(
        ratio(a.true_positive, a.condition_positive),
        ratio(b.true_positive, b.condition_positive),
    )
    .ok_or_else(|| undefined(FairnessMetric::EqualOpportunity, "a group has no good-labelled nodes"))
}

/// False positive rate per group.
pub fn fpr_difference(predictions: &[Label], labels: &[Label], groups: &[Group]) -> Result<GroupComparison> {
    let [a, b] = GroupOutcome::tally(predictions, labels, groups)?;
    GroupComparison::from_rates(
        ratio(a.false_positive, a.condition_negative),
        ratio(b.false_positive, b.condition_negative),
    )
    .ok_or_else(|| undefined(FairnessMetric::FalsePositiveRate, "a group has no bad-labelled nodes"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    /// `None` when either group is absent.
    pub by_group: Option<GroupComparison>,
}

pub fn accuracy(predictions: &[Label], labels: &[Label], groups: &[Group]) -> Result<AccuracyReport> {
    let [a, b] = GroupOutcome::tally(predictions, labels, groups)?;
    let overall = ratio(a.correct + b.correct, a.size + b.size).ok_or(Error::Empty("no predictions"))?;
    Ok(AccuracyReport {
        overall,
        by_group: GroupComparison::from_rates(ratio(a.correct, a.size), ratio(b.correct, b.size)),
    })
}

/// All metrics for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub nodes: usize,
    pub outcomes: [GroupOutcome; 2],
    pub statistical_parity: Option<GroupComparison>,
    pub equal_opportunity: Option<GroupComparison>,
    pub false_positive_rate: Option<GroupComparison>,
    pub accuracy: AccuracyReport,
}

impl FairnessReport {
    pub fn evaluate(predictions: &[Label], labels: &[Label], groups: &[Group]) -> Result<Self> {
        let outcomes = GroupOutcome::tally(predictions, labels, groups)?;
        Ok(FairnessReport {
            nodes: predictions.len(),
            outcomes,
            statistical_parity: statistical_parity(predictions, groups).ok(),
            equal_opportunity: equal_opportunity(predictions, labels, groups).ok(),
            false_positive_rate: fpr_difference(predictions, labels, groups).ok(),
            accuracy: accuracy(predictions, labels, groups)?,
        })
    }

    pub fn get(&self, metric: FairnessMetric) -> Option<GroupComparison> {
        match metric {
            FairnessMetric::StatisticalParity => self.statistical_parity,
            FairnessMetric::EqualOpportunity => self.equal_opportunity,
            FairnessMetric::FalsePositiveRate => self.false_positive_rate,
            FairnessMetric::Accuracy => self.accuracy.by_group,
        }
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        if values.iter().all(|&v| v == values[0]) {
            return Some(Stat { mean: values[0], std: 0.0 });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub majority: Stat,
    pub minority: Stat,
    pub delta: Stat,
}

/// One metric across repeats. Undefined runs are excluded and counted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub defined: usize,
    pub undefined: usize,
    pub summary: Option<ComparisonSummary>,
}

impl MetricSummary {
    fn of(values: impl IntoIterator<Item = Option<GroupComparison>>) -> Self {
        let mut defined = Vec::new();
        let mut undefined = 0;
        for v in values {
            match v {
                Some(c) => defined.push(c),
                None => undefined += 1,
            }
        }
        let pick = |f: fn(&GroupComparison) -> f64| Stat::of(&defined.iter().map(f).collect::<Vec<_>>());
        let summary = (!defined.is_empty()).then(|| ComparisonSummary {
            majority: pick(|c| c.majority).expect("nonempty"),
            minority: pick(|c| c.minority).expect("nonempty"),
            delta: pick(|c| c.delta).expect("nonempty"),
        });
        MetricSummary {
            defined: defined.len(),
            undefined,
            summary,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub repeats: usize,
    pub statistical_parity: MetricSummary,
    pub equal_opportunity: MetricSummary,
    pub false_positive_rate: MetricSummary,
    pub accuracy: MetricSummary,
    pub overall_accuracy: Stat,
}

impl AggregateReport {
    pub fn get(&self, metric: FairnessMetric) -> &MetricSummary {
        match metric {
            FairnessMetric::StatisticalParity => &self.statistical_parity,
            FairnessMetric::EqualOpportunity => &self.equal_opportunity,
            FairnessMetric::FalsePositiveRate => &self.false_positive_rate,
            FairnessMetric::Accuracy => &self.accuracy,
        }
    }

    /// Mean group delta, if any repeat defined the metric.
    pub fn mean_delta(&self, metric: FairnessMetric) -> Option<f64> {
        self.get(metric).summary.map(|s| s.delta.mean)
    }
}

/// Per-metric mean and population standard deviation over repeats; deltas
/// are averaged per run, not recomputed from averaged rates.
pub fn aggregate_repeats(reports: &[FairnessReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Empty("no reports to aggregate"));
    }
    let column = |m: FairnessMetric| MetricSummary::of(reports.iter().map(|r| r.get(m)));
    let overall: Vec<f64> = reports.iter().map(|r| r.accuracy.overall).collect();
    Ok(AggregateReport {
        repeats: reports.len(),
        statistical_parity: column(FairnessMetric::StatisticalParity),
        equal_opportunity: column(FairnessMetric::EqualOpportunity),
        false_positive_rate: column(FairnessMetric::FalsePositiveRate),
        accuracy: column(FairnessMetric::Accuracy),
        overall_accuracy: Stat::of(&overall).expect("nonempty"),
    })
}

/// Orders methods from fairest to least fair by mean delta on `metric`.
/// Methods for which the metric is undefined in every repeat come last.
pub fn rank_by_delta(entries: &[(String, AggregateReport)], metric: FairnessMetric) -> Vec<(&str, Option<f64>)> {
    let mut ranked: Vec<(&str, Option<f64>)> = entries
        .iter()
        .map(|(name, agg)| (name.as_str(), agg.mean_delta(metric)))
        .collect();
    ranked.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Group::{Majority as A, Minority as B};
    use Label::{Bad, Good};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn parity_hand_case() {
        // A: 4 of 6 positive, B: 1 of 4
        let groups = [A, A, A, A, A, A, B, B, B, B];
        let preds = [Good, Good, Good, Good, Bad, Bad, Good, Bad, Bad, Bad];
        let sp = statistical_parity(&preds, &groups).unwrap();
        assert!(close(sp.delta, 0.41667, 1e-4));
        let all = statistical_parity(&[Good; 10], &groups).unwrap();
        assert_eq!((all.majority, all.minority, all.delta), (1.0, 1.0, 0.0));
        assert!(statistical_parity(&[Good, Bad], &[A, A]).is_err());
    }

    #[test]
    fn opportunity_hand_case() {
        // A: TP/CP = 3/4, B: 1/2
        let groups = [A, A, A, A, B, B];
        let labels = [Good; 6];
        let preds = [Good, Good, Good, Bad, Good, Bad];
        let eo = equal_opportunity(&preds, &labels, &groups).unwrap();
        assert_eq!((eo.majority, eo.minority, eo.delta), (0.75, 0.5, 0.25));
        assert_eq!(equal_opportunity(&labels, &labels, &groups).unwrap().delta, 0.0);
        assert!(matches!(
            equal_opportunity(&[Good, Good], &[Good, Bad], &[A, B]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn fpr_hand_case() {
        // A: FP/CN = 2/5, B: 1/5
        let groups = [A, A, A, A, A, B, B, B, B, B];
        let labels = [Bad; 10];
        let preds = [Good, Good, Bad, Bad, Bad, Good, Bad, Bad, Bad, Bad];
        let f = fpr_difference(&preds, &labels, &groups).unwrap();
        assert!(close(f.delta, 0.2, 1e-12));
        let never = fpr_difference(&[Bad; 10], &labels, &groups).unwrap();
        assert_eq!((never.majority, never.minority, never.delta), (0.0, 0.0, 0.0));
        assert!(fpr_difference(&[Good, Good], &[Good, Bad], &[A, B]).is_err());
    }

    #[test]
    fn accuracy_hand_case() {
        let groups = [A, A, A, A, A, B, B, B, B, B];
        let labels = [Good, Good, Good, Good, Good, Bad, Bad, Bad, Bad, Bad];
        let preds = [Good, Good, Good, Good, Bad, Bad, Bad, Good, Good, Bad];
        let acc = accuracy(&preds, &labels, &groups).unwrap();
        assert!(close(acc.overall, 0.7, 1e-12));
        let by = acc.by_group.unwrap();
        assert_eq!((by.majority, by.minority), (0.8, 0.6));
        assert_eq!(accuracy(&labels, &labels, &groups).unwrap().overall, 1.0);
        assert!(accuracy(&[], &[], &[]).is_err());
        assert!(accuracy(&[Good], &[Good], &[A]).unwrap().by_group.is_none());
    }

    fn report_with_delta(delta: f64) -> FairnessReport {
        let c = GroupComparison {
            majority: 0.5 + delta,
            minority: 0.5,
            delta,
        };
        FairnessReport {
            nodes: 10,
            outcomes: [GroupOutcome::default(); 2],
            statistical_parity: Some(c),
            equal_opportunity: Some(c),
            false_positive_rate: None,
            accuracy: AccuracyReport {
                overall: 0.7,
                by_group: Some(c),
            },
        }
    }

    #[test]
    fn aggregation_arithmetic() {
        let reports: Vec<_> = [0.1, 0.2, 0.3].into_iter().map(report_with_delta).collect();
        let agg = aggregate_repeats(&reports).unwrap();
        let d = agg.statistical_parity.summary.unwrap().delta;
        assert!(close(d.mean, 0.2, 1e-12));
        assert!(close(d.std, (0.02f64 / 3.0).sqrt(), 1e-12));
        assert!(close(d.std, 0.0816, 1e-4));
        assert_eq!(agg.false_positive_rate.undefined, 3);
        assert!(agg.false_positive_rate.summary.is_none());
        assert_eq!(agg.overall_accuracy.std, 0.0);

        let same = aggregate_repeats(&vec![report_with_delta(0.15); 3]).unwrap();
        for m in FairnessMetric::ALL {
            if let Some(s) = same.get(m).summary {
                assert_eq!((s.majority.std, s.minority.std, s.delta.std), (0.0, 0.0, 0.0));
            }
        }
        let single = aggregate_repeats(&[report_with_delta(0.25)]).unwrap();
        assert_eq!(single.mean_delta(FairnessMetric::EqualOpportunity), Some(0.25));
        assert!(aggregate_repeats(&[]).is_err());
    }

    #[test]
    fn ranking_orders_by_delta_not_rate() {
        let mut high_rate = report_with_delta(0.05);
        high_rate.statistical_parity = Some(GroupComparison {
            majority: 0.95,
            minority: 0.9,
            delta: 0.05,
        });
        let entries = vec![
            ("wide".to_string(), aggregate_repeats(&[report_with_delta(0.3)]).unwrap()),
            ("narrow".to_string(), aggregate_repeats(&[high_rate]).unwrap()),
        ];
        let ranked = rank_by_delta(&entries, FairnessMetric::StatisticalParity);
        assert_eq!(ranked[0].0, "narrow");
        let ranked = rank_by_delta(&entries, FairnessMetric::FalsePositiveRate);
        assert!(ranked.iter().all(|r| r.1.is_none()));
    }

    #[test]
    fn mirrored_dataset_has_zero_deltas() {
        let labels = [Good, Bad, Good, Good, Bad];
        let preds = [Good, Good, Bad, Good, Bad];
        let mut all_l = labels.to_vec();
        all_l.extend(labels);
        let mut all_p = preds.to_vec();
        all_p.extend(preds);
        let groups: Vec<Group> = (0..10).map(|i| if i < 5 { A } else { B }).collect();
        let r = FairnessReport::evaluate(&all_p, &all_l, &groups).unwrap();
        for m in FairnessMetric::ALL {
            assert_eq!(r.get(m).unwrap().delta, 0.0, "{m:?}");
        }
    }

    // independent oracle: filter-and-count per group
    fn oracle(p: &[Label], y: &[Label], g: &[Group]) -> [Option<(f64, f64)>; 4] {
        let rate = |grp: Group, num: &dyn Fn(usize) -> bool, den: &dyn Fn(usize) -> bool| {
            let d = (0..p.len()).filter(|&i| g[i] == grp && den(i)).count();
            let n = (0..p.len()).filter(|&i| g[i] == grp && den(i) && num(i)).count();
            (d > 0).then(|| n as f64 / d as f64)
        };
        let pair = |num: &dyn Fn(usize) -> bool, den: &dyn Fn(usize) -> bool| {
            Some((rate(A, num, den)?, rate(B, num, den)?))
        };
        [
            pair(&|i| p[i] == Good, &|_| true),
            pair(&|i| p[i] == Good, &|i| y[i] == Good),
            pair(&|i| p[i] == Good, &|i| y[i] == Bad),
            pair(&|i| p[i] == y[i], &|_| true),
        ]
    }

    fn node() -> impl Strategy<Value = (Group, Label, Label)> {
        (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(g, y, p)| {
            (
                if g { A } else { B },
                if y { Good } else { Bad },
                if p { Good } else { Bad },
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_confusion_oracle(nodes in prop::collection::vec(node(), 1..=30)) {
            let g: Vec<Group> = nodes.iter().map(|n| n.0).collect();
            let y: Vec<Label> = nodes.iter().map(|n| n.1).collect();
            let p: Vec<Label> = nodes.iter().map(|n| n.2).collect();
            let report = FairnessReport::evaluate(&p, &y, &g).unwrap();
            let expected = oracle(&p, &y, &g);
            for (m, want) in FairnessMetric::ALL.into_iter().zip(expected) {
                let got = report.get(m).map(|c| (c.majority, c.minority));
                prop_assert_eq!(got, want, "{:?}", m);
                if let Some(c) = report.get(m) {
                    prop_assert!(c.delta >= 0.0);
                    prop_assert!((0.0..=1.0).contains(&c.majority) && (0.0..=1.0).contains(&c.minority));
                }
            }
            let [a, b] = report.outcomes;
            for o in [a, b] {
                prop_assert!(o.true_positive <= o.condition_positive);
                prop_assert!(o.false_positive <= o.condition_negative);
            }

            // swapping group roles leaves deltas unchanged
            let flipped: Vec<Group> = g.iter().map(|x| x.flipped()).collect();
            let swapped = FairnessReport::evaluate(&p, &y, &flipped).unwrap();
            for m in FairnessMetric::ALL {
                prop_assert_eq!(report.get(m).map(|c| c.delta), swapped.get(m).map(|c| c.delta));
            }
        }
    }
}
