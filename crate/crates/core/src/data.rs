//! Right-censored competing-risks data and the event-time bookkeeping shared
//! by every estimator.
//!
//! Subjects are kept in input order. Event ordering lives in [`EventIndex`],
//! which stores subject positions rather than copies, so a bootstrap replicate
//! only needs a fresh weight vector.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One row of follow-up data.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub time: f64,
    /// 0 = censored, 1..=J = cause of the observed event.
    pub event: u32,
    pub covariates: Vec<f64>,
    pub weight: f64,
}

impl SubjectRecord {
    pub fn new(time: f64, event: u32, covariates: Vec<f64>) -> Self {
        Self {
            time,
            event,
            covariates,
            weight: 1.0,
        }
    }

    pub fn is_event(&self) -> bool {
        self.event != 0
    }
}

/// How identical uncensored follow-up times are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    Reject,
    #[default]
    Jitter,
}

impl FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reject" => Ok(TiePolicy::Reject),
            "jitter" => Ok(TiePolicy::Jitter),
            other => Err(Error::InvalidInput(format!(
                "unknown tie policy `{other}` (expected reject|jitter)"
            ))),
        }
    }
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Reject => "reject",
            TiePolicy::Jitter => "jitter",
        })
    }
}

/// What [`SurvivalDataset::resolve_ties`] changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TieReport {
    pub tied_groups: usize,
    pub adjusted_subjects: usize,
    /// Perturbation unit: `1e-9 * median(time)`.
    pub epsilon: f64,
    /// The original tied times, one entry per group.
    pub tied_times: Vec<f64>,
}

impl TieReport {
    pub fn is_empty(&self) -> bool {
        self.tied_groups == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    subjects: Vec<SubjectRecord>,
    num_causes: u32,
    covariate_dim: usize,
}

impl SurvivalDataset {
    /// Validates and wraps `subjects`.
    pub fn new(subjects: Vec<SubjectRecord>, num_causes: u32, covariate_dim: usize) -> Result<Self> {
        if num_causes == 0 {
            return Err(Error::InvalidInput("number of causes must be positive".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            if !(s.time.is_finite() && s.time > 0.0) {
                return Err(Error::NonpositiveTime {
                    row: i,
                    value: s.time,
                });
            }
            if s.event > num_causes {
                return Err(Error::UnknownEventCode {
                    row: i,
                    value: s.event.to_string(),
                });
            }
            if s.covariates.len() != covariate_dim {
                return Err(Error::InvalidInput(format!(
                    "subject {i} has {} covariates, expected {covariate_dim}",
                    s.covariates.len()
                )));
            }
            if s.covariates.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "subject {i} has a non-finite covariate"
                )));
            }
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "subject {i} has non-positive weight {}",
                    s.weight
                )));
            }
        }
        Ok(Self {
            subjects,
            num_causes,
            covariate_dim,
        })
    }

    /// Infers `J` from the largest event code (at least 1) and `d` from the
    /// first subject.
    pub fn from_subjects(subjects: Vec<SubjectRecord>) -> Result<Self> {
        let num_causes = subjects.iter().map(|s| s.event).max().unwrap_or(0).max(1);
        let dim = subjects.first().map_or(0, |s| s.covariates.len());
        Self::new(subjects, num_causes, dim)
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn num_causes(&self) -> u32 {
        self.num_causes
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn weights(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.weight).collect()
    }

    /// Copy of the dataset with subject weights replaced.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "weight vector has length {}, dataset has {} subjects",
                weights.len(),
                self.len()
            )));
        }
        let subjects = self
            .subjects
            .iter()
            .zip(weights)
            .map(|(s, &w)| SubjectRecord { weight: w, ..s.clone() })
            .collect();
        Self::new(subjects, self.num_causes, self.covariate_dim)
    }

    pub fn event_count(&self, cause: u32) -> usize {
        self.subjects.iter().filter(|s| s.event == cause).count()
    }

    pub fn censored_count(&self) -> usize {
        self.event_count(0)
    }

    /// True when the largest follow-up time belongs to an event and no
    /// censored subject shares it.
    pub fn last_followup_is_event(&self) -> bool {
        let Some(max) = self.subjects.iter().map(|s| s.time).max_by(f64::total_cmp) else {
            return false;
        };
        self.subjects
            .iter()
            .filter(|s| s.time == max)
            .all(SubjectRecord::is_event)
    }

    /// Groups of uncensored subjects sharing an identical time, each group in
    /// input order.
    fn tied_event_groups(&self) -> Vec<Vec<usize>> {
        let mut events: Vec<usize> = (0..self.len()).filter(|&i| self.subjects[i].is_event()).collect();
        // stable: input order is kept inside a tie group
        events.sort_by(|&a, &b| self.subjects[a].time.total_cmp(&self.subjects[b].time));
        let mut groups = Vec::new();
        let mut i = 0;
        while i < events.len() {
            let t = self.subjects[events[i]].time;
            let mut j = i + 1;
            while j < events.len() && self.subjects[events[j]].time == t {
                j += 1;
            }
            if j - i > 1 {
                groups.push(events[i..j].to_vec());
            }
            i = j;
        }
        groups
    }

    /// Applies `policy` to identical uncensored times.
    ///
    /// `Jitter` shifts the r-th member (r = 0, 1, ...) of each tie group, in
    /// input order, by `r * 1e-9 * median(time)`.
    pub fn resolve_ties(&mut self, policy: TiePolicy) -> Result<TieReport> {
        let groups = self.tied_event_groups();
        if groups.is_empty() {
            return Ok(TieReport::default());
        }
        let tied_times: Vec<f64> = groups.iter().map(|g| self.subjects[g[0]].time).collect();
        if policy == TiePolicy::Reject {
            return Err(Error::TiedEventTimes { times: tied_times });
        }
        let mut times: Vec<f64> = self.subjects.iter().map(|s| s.time).collect();
        let epsilon = 1e-9 * median(&mut times);
        let mut adjusted = 0;
        for group in &groups {
            for (rank, &i) in group.iter().enumerate().skip(1) {
                self.subjects[i].time += rank as f64 * epsilon;
                adjusted += 1;
            }
        }
        let remaining = self.tied_event_groups();
        if !remaining.is_empty() {
            return Err(Error::TiedEventTimes {
                times: remaining.iter().map(|g| self.subjects[g[0]].time).collect(),
            });
        }
        log::info!(
            "broke {} tie group(s) among event times by jittering {} subject(s) (unit {:e})",
            groups.len(),
            adjusted,
            epsilon
        );
        Ok(TieReport {
            tied_groups: groups.len(),
            adjusted_subjects: adjusted,
            epsilon,
            tied_times,
        })
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

/// Ordered distinct event times with the subject failing at each.
#[derive(Debug, Clone, PartialEq)]
pub struct EventIndex {
    times: Vec<f64>,
    failer: Vec<usize>,
    cause: Vec<u32>,
}

impl EventIndex {
    /// Fails with [`Error::TiedEventTimes`] if two uncensored subjects share a
    /// time; call [`SurvivalDataset::resolve_ties`] first for raw data.
    pub fn build(data: &SurvivalDataset) -> Result<Self> {
        let subjects = data.subjects();
        let mut failer: Vec<usize> = (0..subjects.len()).filter(|&i| subjects[i].is_event()).collect();
        failer.sort_by(|&a, &b| subjects[a].time.total_cmp(&subjects[b].time));
        let times: Vec<f64> = failer.iter().map(|&i| subjects[i].time).collect();
        let mut tied: Vec<f64> = times.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0]).collect();
        if !tied.is_empty() {
            tied.dedup();
            return Err(Error::TiedEventTimes { times: tied });
        }
        let cause = failer.iter().map(|&i| subjects[i].event).collect();
        Ok(Self {
            times,
            failer,
            cause,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn failers(&self) -> &[usize] {
        &self.failer
    }

    pub fn causes(&self) -> &[u32] {
        &self.cause
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// K(t): number of event times in [0, t].
    pub fn count_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }
}

/// Σᵢ wᵢ · 1{Xᵢ ≥ t} · θᵢ.
pub fn risk_sum(data: &SurvivalDataset, theta: &[f64], t: f64) -> f64 {
    data.subjects()
        .iter()
        .zip(theta)
        .filter(|(s, _)| s.time >= t)
        .map(|(s, &th)| s.weight * th)
        .sum()
}

/// Subjects sorted by time plus, for each event, where its risk set starts in
/// that order. Shared by the Cox fitter and the estimators so that weighted
/// refits do not re-sort.
#[derive(Debug, Clone)]
pub struct RiskSetLayout {
    index: EventIndex,
    order: Vec<usize>,
    /// `risk_start[k]`: first position in `order` with time ≥ T₍ₖ₎.
    risk_start: Vec<usize>,
}

impl RiskSetLayout {
    pub fn new(data: &SurvivalDataset) -> Result<Self> {
        let index = EventIndex::build(data)?;
        let subjects = data.subjects();
        let mut order: Vec<usize> = (0..subjects.len()).collect();
        order.sort_by(|&a, &b| match subjects[a].time.total_cmp(&subjects[b].time) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
        let risk_start = index
            .times()
            .iter()
            .map(|&t| order.partition_point(|&i| subjects[i].time < t))
            .collect();
        Ok(Self {
            index,
            order,
            risk_start,
        })
    }

    pub fn index(&self) -> &EventIndex {
        &self.index
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn risk_start(&self) -> &[usize] {
        &self.risk_start
    }

    /// `Σᵣ wᵣ Yᵣ(T₍ₖ₎) θᵣ` for every event k, via one suffix pass.
    pub fn risk_sums_at_events(&self, weighted_theta: &[f64]) -> Vec<f64> {
        let n = self.order.len();
        let mut suffix = vec![0.0; n + 1];
        for pos in (0..n).rev() {
            suffix[pos] = suffix[pos + 1] + weighted_theta[self.order[pos]];
        }
        self.risk_start.iter().map(|&s| suffix[s]).collect()
    }
}
