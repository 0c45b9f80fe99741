//! Seeded synthetic student populations.
//!
//! Each simulated student walks the correct flow and, with the profile's
//! probabilities, skips right actions, repeats finished ones, wanders into
//! other phases, performs extra available actions or fumbles objects. The
//! stream is classified by the same [`Replayer`] used for real data, so a
//! student blocked by the tutor goes back and completes the pending actions
//! before retrying.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RawAction, ReplayState, Replayer};
use crate::domain::{AssignmentConfig, ErrorKind, EventKind, StudentLog};
use crate::error::Result;

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2015, 3, 2, 9, 0, 0).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub count: usize,
    pub skip_probability: f64,
    pub repeat_probability: f64,
    pub seed: u64,
    /// Skip probability per action code or per phase id; codes win over phases.
    #[serde(default)]
    pub skip_overrides: BTreeMap<String, f64>,
    /// Chance per step of trying an action from another phase.
    #[serde(default)]
    pub wander_probability: f64,
    /// Chance per step of performing an available off-flow action.
    #[serde(default)]
    pub extra_probability: f64,
    #[serde(default)]
    pub world_error_probability: f64,
    /// Chance of ignoring a minimum waiting time between two actions.
    #[serde(default)]
    pub hurry_probability: f64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    /// Students start on a day drawn uniformly from `[0, span_days)`.
    #[serde(default)]
    pub span_days: u32,
    /// Grades drawn uniformly from `[lo, hi]`, rounded to one decimal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade_range: Option<[f64; 2]>,
}

impl Profile {
    pub fn new(count: usize, skip_probability: f64, repeat_probability: f64, seed: u64) -> Self {
        Profile {
            count,
            skip_probability,
            repeat_probability,
            seed,
            skip_overrides: BTreeMap::new(),
            wander_probability: 0.0,
            extra_probability: 0.0,
            world_error_probability: 0.0,
            hurry_probability: 0.0,
            start: default_start(),
            span_days: 0,
            grade_range: None,
        }
    }

    fn check(&self) -> Result<()> {
        let probs = [
            self.skip_probability,
            self.repeat_probability,
            self.wander_probability,
            self.extra_probability,
            self.world_error_probability,
            self.hurry_probability,
        ];
        if probs.iter().chain(self.skip_overrides.values()).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(crate::Error::InvalidParams("profile probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

struct Simulator<'a> {
    config: &'a AssignmentConfig,
    replayer: Replayer<'a>,
}

const MAX_REPEATS: usize = 4;

impl<'a> Simulator<'a> {
    fn skip_probability(&self, profile: &Profile, code: &str, phase: &str) -> f64 {
        profile.skip_overrides.get(code).or_else(|| profile.skip_overrides.get(phase)).copied().unwrap_or(profile.skip_probability)
    }

    fn student(&self, id: &str, profile: &Profile, rng: &mut ChaCha8Rng) -> Vec<RawAction> {
        let index = self.config.index();
        let flow = &self.config.correct_flow;
        let day = if profile.span_days > 0 { rng.random_range(0..profile.span_days) } else { 0 };
        let mut clock = profile.start + Duration::days(day as i64) + Duration::minutes(rng.random_range(0..240));
        let mut state = ReplayState::default();
        let mut out = Vec::new();

        let mut emit = |code: &str, world: bool, rng: &mut ChaCha8Rng, state: &mut ReplayState, out: &mut Vec<RawAction>| {
            clock += Duration::seconds(rng.random_range(20..=90));
            if rng.random::<f64>() >= profile.hurry_probability {
                for tc in index.action(code).map(|a| a.time_constraints.as_slice()).unwrap_or_default() {
                    let (Some(min), Some(prev)) = (tc.min_seconds, state.performed.iter().find(|p| p.code == tc.other)) else {
                        continue;
                    };
                    let earliest = prev.at + Duration::seconds(min.ceil() as i64 + 5);
                    clock = clock.max(earliest);
                }
            }
            let mut raw = RawAction::new(id, clock, code);
            if world {
                raw.world_error = Some(format!("could not handle the object for {code}"));
            }
            let (events, next) = self.replayer.classify(&raw, state);
            *state = next;
            out.push(raw);
            events
        };

        let mut i = 0;
        while i < flow.len() {
            let code = flow[i].as_str();
            let phase = index.action(code).map_or("", |a| a.phase.as_str());
            let next_same_phase = flow.get(i + 1).and_then(|n| index.action(n)).is_some_and(|n| n.phase == phase);
            if next_same_phase && rng.random::<f64>() < self.skip_probability(profile, code, phase) {
                i += 1;
                continue;
            }
            if rng.random::<f64>() < profile.extra_probability {
                let extras: Vec<&str> = self
                    .config
                    .actions
                    .iter()
                    .filter(|a| a.phase == phase && index.flow_position(&a.code).is_none() && !state.has_performed(&a.code))
                    .map(|a| a.code.as_str())
                    .collect();
                if let Some(extra) = extras.choose(rng) {
                    emit(extra, false, rng, &mut state, &mut out);
                }
            }
            if rng.random::<f64>() < profile.wander_probability {
                let elsewhere: Vec<&str> = self.config.actions.iter().filter(|a| a.phase != phase).map(|a| a.code.as_str()).collect();
                if let Some(other) = elsewhere.choose(rng) {
                    emit(other, false, rng, &mut state, &mut out);
                }
            }

            let world = rng.random::<f64>() < profile.world_error_probability;
            let events = emit(code, world, rng, &mut state, &mut out);
            let blocked = events.len() == 1 && events[0].kind == EventKind::Try && events[0].error_kind == ErrorKind::None;
            if blocked {
                // the tutor refused the action: complete what is pending, then retry
                let pending: Vec<String> = flow[state.flow_cursor.min(i)..i].iter().filter(|c| !state.has_performed(c)).cloned().collect();
                for missing in &pending {
                    emit(missing, false, rng, &mut state, &mut out);
                }
                emit(code, false, rng, &mut state, &mut out);
            }

            let mut repeats = 0;
            while repeats < MAX_REPEATS && rng.random::<f64>() < profile.repeat_probability {
                let done: Vec<String> = state.performed.iter().map(|p| p.code.clone()).collect();
                if let Some(again) = done.choose(rng) {
                    emit(again, false, rng, &mut state, &mut out);
                }
                repeats += 1;
            }
            i += 1;
        }
        out
    }
}

/// Raw action streams for every simulated student, in id order.
pub fn generate_raw_actions(config: &AssignmentConfig, profiles: &[Profile]) -> Result<Vec<Vec<RawAction>>> {
    let sim = Simulator { config, replayer: Replayer::new(config) };
    let mut out = Vec::new();
    let mut next_id = 1;
    for profile in profiles {
        profile.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
        for _ in 0..profile.count {
            let id = format!("s{next_id:03}");
            next_id += 1;
            out.push(sim.student(&id, profile, &mut rng));
        }
    }
    Ok(out)
}

/// Deterministic synthetic corpus; students are numbered `s001`, `s002`, ...
/// across all profiles in order.
pub fn generate_corpus(config: &AssignmentConfig, profiles: &[Profile]) -> Result<Vec<StudentLog>> {
    let replayer = Replayer::new(config);
    let streams = generate_raw_actions(config, profiles)?;
    let mut logs = Vec::with_capacity(streams.len());
    let mut streams = streams.into_iter();
    for profile in profiles {
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed ^ 0x9e37_79b9_7f4a_7c15);
        for stream in streams.by_ref().take(profile.count) {
            let mut log = replayer.replay(&stream)?;
            log.grade = profile.grade_range.map(|[lo, hi]| {
                let g = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                (g * 10.0).round() / 10.0
            });
            logs.push(log);
        }
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> AssignmentConfig {
        AssignmentConfig::from_json(include_str!("../../../../fixtures/demo_config.json")).unwrap()
    }

    #[test]
    fn zero_error_profile_is_perfect() {
        let cfg = demo();
        let logs = generate_corpus(&cfg, &[Profile::new(1, 0.0, 0.0, 99)]).unwrap();
        assert_eq!(logs.len(), 1);
        assert_eq!(logs[0].events.len(), cfg.correct_flow.len());
        assert!(logs[0].events.iter().all(|e| e.kind == EventKind::Do && e.error_kind == ErrorKind::None));
    }

    #[test]
    fn forced_skip_blames_the_action() {
        let cfg = demo();
        let mut p = Profile::new(10, 0.0, 0.0, 7);
        p.skip_overrides.insert("f1t14".into(), 1.0);
        let logs = generate_corpus(&cfg, &[p]).unwrap();
        assert_eq!(logs.len(), 10);
        for log in &logs {
            assert!(log.events.iter().any(|e| e.kind == EventKind::Fail && e.blamed_action.as_deref() == Some("f1t14")));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = demo();
        let mut p = Profile::new(5, 0.1, 0.2, 3);
        p.wander_probability = 0.05;
        p.extra_probability = 0.05;
        p.world_error_probability = 0.05;
        assert_eq!(generate_corpus(&cfg, &[p.clone()]).unwrap(), generate_corpus(&cfg, &[p.clone()]).unwrap());
        p.seed = 4;
        let other = generate_corpus(&cfg, &[p]).unwrap();
        assert_eq!(other.len(), 5);
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(generate_corpus(&demo(), &[Profile::new(1, 1.5, 0.0, 1)]).is_err());
    }

    #[test]
    fn repeats_produce_already_performed() {
        let cfg = demo();
        let logs = generate_corpus(&cfg, &[Profile::new(3, 0.0, 0.3, 11)]).unwrap();
        let repeats = logs.iter().flat_map(|l| &l.events).filter(|e| e.error_kind == ErrorKind::AlreadyPerformed).count();
        assert!(repeats > 0);
        // no skips, so nothing relevant happens
        assert!(logs.iter().flat_map(|l| &l.events).all(|e| e.kind != EventKind::Fail));
    }
}
