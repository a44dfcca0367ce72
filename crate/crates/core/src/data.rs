//! Observed data for one subject: repeated marker measurements grouped by
//! visit, and the multistate event record. All times are on the transformed
//! scale (see [`crate::time::TimeScale`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Transition;

/// One visit: its time and the `n >= 1` marker measurements taken there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitBlock {
    pub time: f64,
    pub measurements: Vec<f64>,
}

impl VisitBlock {
    pub fn new(time: f64, measurements: Vec<f64>) -> Self {
        VisitBlock { time, measurements }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

/// `(T0, L, R, delta_dem, T, delta_death)` plus per-transition baseline
/// covariates. `diagnosis` is `Some(R)` exactly when dementia was diagnosed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub entry: f64,
    pub last_healthy: f64,
    pub diagnosis: Option<f64>,
    pub terminal: f64,
    pub death: bool,
    /// Covariate rows for the 0→1, 0→2 and 1→2 transitions, in that order.
    pub covariates: [Vec<f64>; 3],
}

impl EventRecord {
    pub fn new(
        entry: f64,
        last_healthy: f64,
        diagnosis: Option<f64>,
        terminal: f64,
        death: bool,
    ) -> Self {
        EventRecord {
            entry,
            last_healthy,
            diagnosis,
            terminal,
            death,
            covariates: Default::default(),
        }
    }

    pub fn with_covariates(mut self, covariates: Vec<f64>) -> Self {
        self.covariates = [covariates.clone(), covariates.clone(), covariates];
        self
    }

    pub fn dementia(&self) -> bool {
        self.diagnosis.is_some()
    }

    pub fn covariates_for(&self, transition: Transition) -> &[f64] {
        &self.covariates[transition.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [Some(self.entry), Some(self.last_healthy), self.diagnosis, Some(self.terminal)];
        if all.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("event times must be finite".into()));
        }
        if self.entry < 0.0 {
            return Err(Error::InvalidInput(format!(
                "entry time {} precedes the time origin",
                self.entry
            )));
        }
        if self.entry > self.last_healthy {
            return Err(Error::InvalidInput(format!(
                "entry {} after last healthy visit {}",
                self.entry, self.last_healthy
            )));
        }
        if self.last_healthy > self.terminal {
            return Err(Error::InvalidInput(format!(
                "last healthy visit {} after terminal time {}",
                self.last_healthy, self.terminal
            )));
        }
        if let Some(r) = self.diagnosis {
            if r < self.last_healthy || r > self.terminal {
                return Err(Error::InvalidInput(format!(
                    "diagnosis time {r} outside [{}, {}]",
                    self.last_healthy, self.terminal
                )));
            }
        }
        Ok(())
    }
}

/// One subject: ordered visits, subject-level marker covariates and events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectData {
    pub id: String,
    pub visits: Vec<VisitBlock>,
    /// Time-constant covariates entering the fixed part of the marker model.
    #[serde(default)]
    pub marker_covariates: Vec<f64>,
    pub event: EventRecord,
}

impl SubjectData {
    pub fn new(id: impl Into<String>, visits: Vec<VisitBlock>, event: EventRecord) -> Self {
        SubjectData {
            id: id.into(),
            visits,
            marker_covariates: Vec::new(),
            event,
        }
    }

    pub fn n_measurements(&self) -> usize {
        self.visits.iter().map(VisitBlock::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::InvalidInput(format!("subject {}: {e}", self.id));
        self.event.validate().map_err(wrap)?;
        for pair in self.visits.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(wrap(Error::InvalidInput(
                    "visit times must be strictly increasing".into(),
                )));
            }
        }
        for v in &self.visits {
            if v.measurements.is_empty() {
                return Err(wrap(Error::InvalidInput("visit without measurements".into())));
            }
            if v.time > self.event.terminal {
                return Err(wrap(Error::InvalidInput(format!(
                    "visit at {} after terminal time {}",
                    v.time, self.event.terminal
                ))));
            }
            if !v.time.is_finite() || v.measurements.iter().any(|y| !y.is_finite()) {
                return Err(wrap(Error::InvalidInput("non-finite marker data".into())));
            }
        }
        Ok(())
    }
}

pub type Dataset = Vec<SubjectData>;

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(event: EventRecord) -> SubjectData {
        SubjectData::new(
            "s",
            vec![VisitBlock::new(0.5, vec![14.0, 13.5]), VisitBlock::new(0.7, vec![14.2])],
            event,
        )
    }

    #[test]
    fn accepts_well_formed_records() {
        subject(EventRecord::new(0.5, 0.7, Some(0.9), 1.2, true)).validate().unwrap();
        subject(EventRecord::new(0.5, 0.7, None, 0.7, false)).validate().unwrap();
    }

    #[test]
    fn rejects_diagnosis_before_last_healthy() {
        let e = EventRecord::new(0.5, 0.8, Some(0.7), 1.2, false);
        assert!(e.validate().is_err());
    }

    #[test]
    fn rejects_visits_after_terminal_time() {
        let s = subject(EventRecord::new(0.5, 0.6, None, 0.65, true));
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_unordered_visits() {
        let mut s = subject(EventRecord::new(0.5, 0.7, None, 1.0, false));
        s.visits.swap(0, 1);
        assert!(s.validate().is_err());
    }
}
