//! Per-round event recording and replay.
//!
//! A log is JSON lines, one [`EventRecord`] per round. The replay functions
//! rebuild a learner's final state from a log by brute force: every round
//! re-evaluates the edge test on every pair, and FORC's cross-learned
//! statistics are recomputed in floating point from the raw counts. They share
//! no state-update code with the learners and serve as test oracles.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::far::{FarConfig, FarSnapshot};
use crate::forc::{ForcConfig, ForcSnapshot, ForcWindow, LevelSnapshot};
use crate::harness::RoundEvent;
use crate::model::{Observation, Ranking};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: u64,
    /// Sampled FORC level, absent for single-level learners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub ranking: Vec<usize>,
    pub fake: bool,
    #[serde(default)]
    pub clicked: Option<usize>,
    pub exit_position: usize,
}

impl EventRecord {
    pub fn from_event(event: &RoundEvent<'_>) -> Self {
        EventRecord {
            t: event.t,
            level: event.level,
            ranking: event.ranking.as_slice().to_vec(),
            fake: event.fake,
            clicked: event.observation.clicked,
            exit_position: event.observation.exit_position,
        }
    }

    pub fn observation(&self) -> Observation {
        Observation {
            clicked: self.clicked,
            exit_position: self.exit_position,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: &RoundEvent<'_>) {
        self.records.push(EventRecord::from_event(event));
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fake_rounds(&self) -> usize {
        self.records.iter().filter(|r| r.fake).count()
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut *out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EventRecord = serde_json::from_str(&line)
                .map_err(|e| Error::EventLog(format!("line {}: {e}", k + 1)))?;
            records.push(record);
        }
        let log = EventLog { records };
        log.check_rounds()?;
        Ok(log)
    }

    fn check_rounds(&self) -> Result<()> {
        for pair in self.records.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::EventLog(format!(
                    "round {} follows round {}",
                    pair[1].t, pair[0].t
                )));
            }
        }
        Ok(())
    }
}

/// Validated ranking and examined products of one record.
fn decode(record: &EventRecord, n: usize) -> Result<(Vec<usize>, Option<usize>)> {
    let ranking = Ranking::new(record.ranking.clone())
        .map_err(|e| Error::EventLog(format!("round {}: {e}", record.t)))?;
    if ranking.len() != n {
        return Err(Error::EventLog(format!(
            "round {}: ranking of {} products, expected {n}",
            record.t,
            ranking.len()
        )));
    }
    record
        .observation()
        .validate(&ranking)
        .map_err(|e| Error::EventLog(format!("round {}: {e}", record.t)))?;
    let examined = ranking.as_slice()[..=record.exit_position].to_vec();
    Ok((examined, record.clicked))
}

fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    // repeatedly strip nodes without outgoing edges
    let mut alive = vec![true; n];
    loop {
        let sink = (0..n).find(|&v| alive[v] && !edges.iter().any(|&(a, b)| a == v && alive[b]));
        match sink {
            Some(v) => alive[v] = false,
            None => return alive.iter().any(|&a| a),
        }
    }
}

/// Rebuilds a FAR learner's state from its log.
pub fn replay_far(log: &EventLog, n: usize, config: &FarConfig) -> Result<FarSnapshot> {
    log.check_rounds()?;
    let delta = config.delta.unwrap_or(1.0 / (n as f64 * config.horizon.max(1) as f64));
    let log_term = (2.0 * n as f64 * config.horizon.max(1) as f64 / delta).ln();
    let budget = config.budget_coef * config.budget as f64;
    let width = |eta: u64| {
        if eta == 0 {
            f64::max(1.0, log_term.sqrt() + budget)
        } else {
            (log_term / eta as f64).sqrt() + budget / eta as f64
        }
    };

    let mut clicks = vec![0u64; n];
    let mut eta = vec![0u64; n];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for record in &log.records {
        if record.level.is_some() {
            return Err(Error::EventLog(format!("round {}: FAR logs carry no level", record.t)));
        }
        let (examined, clicked) = decode(record, n)?;
        for &p in &examined {
            eta[p] += 1;
        }
        if let Some(p) = clicked {
            clicks[p] += 1;
        }
        for i in 0..n {
            for j in 0..n {
                if i == j || eta[i] == 0 || eta[j] == 0 || edges.contains(&(i, j)) {
                    continue;
                }
                let upper_i = clicks[i] as f64 / eta[i] as f64 + width(eta[i]);
                let lower_j = clicks[j] as f64 / eta[j] as f64 - width(eta[j]);
                if upper_i <= lower_j {
                    edges.push((i, j));
                }
            }
        }
    }
    edges.sort_unstable();
    Ok(FarSnapshot { clicks, eta, edges })
}

/// Rebuilds a FORC learner's state from its log.
pub fn replay_forc(log: &EventLog, n: usize, config: &ForcConfig) -> Result<ForcSnapshot> {
    log.check_rounds()?;
    let horizon = config.horizon.max(1) as f64;
    let levels = config.levels.unwrap_or_else(|| {
        let mut l = 0;
        while (1u128 << l) < config.horizon as u128 {
            l += 1;
        }
        l.max(1)
    });
    let delta = config
        .delta
        .unwrap_or(1.0 / (n as f64 * n as f64 * n as f64 * horizon));
    let nf = n as f64;
    let level_log = (2.0 * levels as f64 / delta).ln();
    let width = |hat_eta: f64| {
        let m = hat_eta.max(1.0);
        match config.window {
            ForcWindow::Theory => {
                (1.5 * (4.0 * nf * horizon / delta).ln() / m).sqrt() + (level_log + 4.0) / m
            }
            ForcWindow::Study { budget_coef } => {
                ((2.0 * nf * horizon / delta).ln() / m).sqrt() + budget_coef * level_log / m
            }
        }
    };

    let mut clicks = vec![vec![0u64; n]; levels];
    let mut eta = vec![vec![0u64; n]; levels];
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); levels];
    let mut eliminated = vec![false; levels];

    // cross-learned (count, mean) at 0-based level index `l`
    let hat = |clicks: &[Vec<u64>], eta: &[Vec<u64>], l: usize, i: usize| -> (f64, f64) {
        let weight = 0.5f64.powi(l as i32 + 1);
        let lower_eta: u64 = (0..l).map(|g| eta[g][i]).sum();
        let lower_clicks: u64 = (0..l).map(|g| clicks[g][i]).sum();
        let count = weight * lower_eta as f64 + eta[l][i] as f64;
        let reward = if count > 0.0 {
            (weight * lower_clicks as f64 + clicks[l][i] as f64) / count
        } else {
            0.0
        };
        (count, reward)
    };

    for record in &log.records {
        let level = record
            .level
            .ok_or_else(|| Error::EventLog(format!("round {}: missing level", record.t)))?;
        if !(1..=levels).contains(&level) {
            return Err(Error::EventLog(format!(
                "round {}: level {level} outside 1..={levels}",
                record.t
            )));
        }
        let (examined, clicked) = decode(record, n)?;
        let s = level - 1;
        for &p in &examined {
            eta[s][p] += 1;
        }
        if let Some(p) = clicked {
            clicks[s][p] += 1;
        }

        for l in s..levels {
            if eliminated[l] {
                continue;
            }
            let stats: Vec<(f64, f64)> = (0..n).map(|i| hat(&clicks, &eta, l, i)).collect();
            for i in 0..n {
                for j in 0..n {
                    if i == j || stats[i].0 == 0.0 || stats[j].0 == 0.0 {
                        continue;
                    }
                    let upper_i = stats[i].1 + width(stats[i].0);
                    let lower_j = stats[j].1 - width(stats[j].0);
                    if upper_i < lower_j && !edges[l].contains(&(i, j)) {
                        for g in 0..=l {
                            if !eliminated[g] && !edges[g].contains(&(i, j)) {
                                edges[g].push((i, j));
                            }
                        }
                    }
                }
            }
        }
        if let Some(top) = (0..levels).rev().find(|&l| !eliminated[l] && has_cycle(n, &edges[l])) {
            for flag in eliminated.iter_mut().take(top + 1) {
                *flag = true;
            }
        }
    }

    let snapshots = (0..levels)
        .map(|l| {
            let stats: Vec<(f64, f64)> = (0..n).map(|i| hat(&clicks, &eta, l, i)).collect();
            let mut level_edges = edges[l].clone();
            level_edges.sort_unstable();
            LevelSnapshot {
                level: l + 1,
                clicks: clicks[l].clone(),
                eta: eta[l].clone(),
                hat_eta: stats.iter().map(|s| s.0).collect(),
                hat_reward: stats.iter().map(|s| s.1).collect(),
                edges: level_edges,
                eliminated: eliminated[l],
            }
        })
        .collect();
    Ok(ForcSnapshot { levels: snapshots })
}

/// Compares two FORC snapshots: counters, edges and flags exactly, and
/// materialized means within `tol`. Returns the first difference.
pub fn forc_snapshot_diff(a: &ForcSnapshot, b: &ForcSnapshot, tol: f64) -> Option<String> {
    if a.levels.len() != b.levels.len() {
        return Some(format!("{} levels vs {}", a.levels.len(), b.levels.len()));
    }
    for (x, y) in a.levels.iter().zip(&b.levels) {
        let l = x.level;
        if x.clicks != y.clicks || x.eta != y.eta {
            return Some(format!("level {l}: raw counters differ"));
        }
        if x.edges != y.edges {
            return Some(format!("level {l}: edges {:?} vs {:?}", x.edges, y.edges));
        }
        if x.eliminated != y.eliminated {
            return Some(format!("level {l}: elimination flag differs"));
        }
        let close = |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(p, q)| (p - q).abs() <= tol);
        if !close(&x.hat_eta, &y.hat_eta) || !close(&x.hat_reward, &y.hat_reward) {
            return Some(format!("level {l}: cross-learned statistics differ"));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::far::Far;
    use crate::forc::Forc;

    fn record(t: u64, level: Option<usize>, ranking: &[usize], clicked: Option<usize>, exit: usize) -> EventRecord {
        EventRecord {
            t,
            level,
            ranking: ranking.to_vec(),
            fake: false,
            clicked,
            exit_position: exit,
        }
    }

    #[test]
    fn empty_log_gives_initial_state() {
        let cfg = FarConfig::new(100, 0);
        let far = Far::new(3, cfg.clone()).unwrap();
        assert_eq!(replay_far(&EventLog::new(), 3, &cfg).unwrap(), far.snapshot());

        let cfg = ForcConfig::new(100);
        let forc = Forc::new(3, cfg.clone()).unwrap();
        let replayed = replay_forc(&EventLog::new(), 3, &cfg).unwrap();
        assert_eq!(forc_snapshot_diff(&replayed, &forc.snapshot(), 0.0), None);
    }

    #[test]
    fn single_round_by_hand() {
        let log = EventLog {
            records: vec![record(1, None, &[2, 0, 1], Some(0), 1)],
        };
        let snap = replay_far(&log, 3, &FarConfig::new(100, 0)).unwrap();
        assert_eq!(snap.eta, vec![1, 0, 1]);
        assert_eq!(snap.clicks, vec![1, 0, 0]);
        assert!(snap.edges.is_empty());

        let log = EventLog {
            records: vec![record(1, Some(2), &[2, 0, 1], None, 0)],
        };
        let snap = replay_forc(&log, 3, &ForcConfig::new(8)).unwrap();
        assert_eq!(snap.levels.len(), 3);
        assert_eq!(snap.levels[1].eta, vec![0, 0, 1]);
        // a level-2 sample reaches level 3 at weight 1/8
        assert_eq!(snap.levels[2].hat_eta, vec![0.0, 0.0, 0.125]);
        assert_eq!(snap.levels[0].hat_eta, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn jsonl_round_trip() {
        let log = EventLog {
            records: vec![
                record(1, Some(1), &[0, 1], Some(1), 1),
                EventRecord {
                    fake: true,
                    ..record(2, Some(3), &[1, 0], None, 0)
                },
            ],
        };
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"t":1,"level":1,"ranking":[0,1],"fake":false,"clicked":1,"exit_position":1}"#));
        assert_eq!(EventLog::read_jsonl(buf.as_slice()).unwrap(), log);
        assert_eq!(log.fake_rounds(), 1);
    }

    #[test]
    fn inconsistent_logs_are_rejected() {
        let cfg = FarConfig::new(10, 0);
        let bad_order = EventLog {
            records: vec![record(2, None, &[0, 1], None, 1), record(2, None, &[0, 1], None, 1)],
        };
        assert!(replay_far(&bad_order, 2, &cfg).is_err());
        let bad_click = EventLog {
            records: vec![record(1, None, &[0, 1], Some(1), 0)],
        };
        assert!(replay_far(&bad_click, 2, &cfg).is_err());
        let wrong_n = EventLog {
            records: vec![record(1, None, &[0, 1], None, 1)],
        };
        assert!(replay_far(&wrong_n, 3, &cfg).is_err());
        let bad_level = EventLog {
            records: vec![record(1, Some(9), &[0, 1], None, 1)],
        };
        assert!(replay_forc(&bad_level, 2, &ForcConfig::new(8)).is_err());
        assert!(EventLog::read_jsonl("{\"t\":1}\n".as_bytes()).is_err());
    }

    #[test]
    fn cycle_detection() {
        assert!(!has_cycle(3, &[(0, 1), (1, 2)]));
        assert!(has_cycle(3, &[(0, 1), (1, 2), (2, 0)]));
        assert!(has_cycle(4, &[(0, 1), (1, 0), (2, 3)]));
    }
}
