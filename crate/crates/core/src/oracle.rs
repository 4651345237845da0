//! Rule-based labeling of Frog's best action.
//!
//! The oracle reads a full encoding (statistics cells populated) taken at
//! the moment Frog is about to act: Frog shows its nominal code 4, or 9 when
//! distressed. The first matching rule wins:
//!
//! 1. Frog has no energy: jump.
//! 2. A fly is overhead and Frog's energy is at most `refill_ceiling`: jump.
//! 3. Toad is distressed and Frog has at least `help_min_energy`: help.
//! 4. Rough ground lies within `leap_lookahead` cells ahead and Frog has at
//!    least 2 energy: leap.
//! 5. Otherwise hop.

use crate::env::{
    Action, StateVector, CODE_DISTRESSED, CODE_FROG, FLY_OFFSET, GROUND_OFFSET, MAX_ENERGY,
    PLAYER_OFFSET, ROUGH, STATS_OFFSET, WORLD_WIDTH,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle config: {0}")]
    InvalidConfig(String),
    #[error("malformed state: {0}")]
    MalformedState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub refill_ceiling: u8,
    pub help_min_energy: u8,
    pub leap_lookahead: u8,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            refill_ceiling: 16,
            help_min_energy: 2,
            leap_lookahead: 5,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.refill_ceiling == 0 || self.refill_ceiling > MAX_ENERGY {
            return Err(OracleError::InvalidConfig(format!(
                "refill_ceiling must be in 1..={MAX_ENERGY}, got {}",
                self.refill_ceiling
            )));
        }
        if self.help_min_energy < 1 {
            return Err(OracleError::InvalidConfig(
                "help_min_energy must be at least 1".into(),
            ));
        }
        if !(1..=5).contains(&self.leap_lookahead) {
            return Err(OracleError::InvalidConfig(format!(
                "leap_lookahead must be in 1..=5, got {}",
                self.leap_lookahead
            )));
        }
        Ok(())
    }
}

/// Which rule produced a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Stalled,
    Refill,
    Rescue,
    AvoidRough,
    Advance,
}

impl Rule {
    pub fn action(self) -> Action {
        match self {
            Rule::Stalled | Rule::Refill => Action::Jump,
            Rule::Rescue => Action::Help,
            Rule::AvoidRough => Action::Leap,
            Rule::Advance => Action::Hop,
        }
    }
}

struct FrogView {
    /// `None` when Frog is distressed and its cell cannot be told apart.
    position: Option<usize>,
    energy: u16,
    toad_distressed: bool,
}

fn read_view(state: &StateVector) -> Result<FrogView, OracleError> {
    state
        .validate()
        .map_err(|e| OracleError::MalformedState(e.to_string()))?;
    let cells: Vec<(usize, u16)> = state
        .players()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(i, &c)| (i, c))
        .collect();
    if cells.len() != 2 {
        return Err(OracleError::MalformedState(format!(
            "expected two agents on the player layer, found {}",
            cells.len()
        )));
    }
    let frog_energy = state.0[STATS_OFFSET];
    let toad_energy = state.0[STATS_OFFSET + 1];
    let frog_cells: Vec<usize> = cells
        .iter()
        .filter(|(_, c)| u8::try_from(*c) == Ok(CODE_FROG))
        .map(|(i, _)| *i)
        .collect();
    match frog_cells.as_slice() {
        [pos] => {
            if frog_energy == 0 {
                return Err(OracleError::MalformedState(
                    "frog shown active but energy cell is 0 (statistics zeroed?)".into(),
                ));
            }
            let toad_code = cells
                .iter()
                .find(|(i, _)| i != pos)
                .map(|(_, c)| *c)
                .unwrap();
            let toad_distressed = toad_code == u16::from(CODE_DISTRESSED);
            if toad_distressed != (toad_energy == 0) {
                return Err(OracleError::MalformedState(format!(
                    "toad code {toad_code} disagrees with toad energy {toad_energy}"
                )));
            }
            Ok(FrogView {
                position: Some(*pos),
                energy: frog_energy,
                toad_distressed,
            })
        }
        [] => {
            let distressed = cells
                .iter()
                .filter(|(_, c)| *c == u16::from(CODE_DISTRESSED))
                .count();
            if frog_energy != 0 || distressed == 0 {
                return Err(OracleError::MalformedState(
                    "frog must show code 4, or code 9 with zero energy".into(),
                ));
            }
            Ok(FrogView {
                position: None,
                energy: 0,
                toad_distressed: toad_energy == 0,
            })
        }
        _ => Err(OracleError::MalformedState(
            "more than one cell carries the frog code".into(),
        )),
    }
}

/// The rule that fires for `state`.
pub fn rule_for(state: &StateVector, config: &OracleConfig) -> Result<Rule, OracleError> {
    let view = read_view(state)?;
    let Some(pos) = view.position else {
        return Ok(Rule::Stalled);
    };
    let energy = view.energy;
    if state.0[FLY_OFFSET + pos] == 1 && energy <= u16::from(config.refill_ceiling) {
        return Ok(Rule::Refill);
    }
    if view.toad_distressed && energy >= u16::from(config.help_min_energy) {
        return Ok(Rule::Rescue);
    }
    let end = (pos + usize::from(config.leap_lookahead)).min(WORLD_WIDTH - 1);
    let rough_ahead = (pos + 1..=end).any(|c| state.0[GROUND_OFFSET + c] == u16::from(ROUGH));
    if rough_ahead && energy >= 2 {
        return Ok(Rule::AvoidRough);
    }
    Ok(Rule::Advance)
}

pub fn label(state: &StateVector, config: &OracleConfig) -> Result<Action, OracleError> {
    rule_for(state, config).map(Rule::action)
}

/// Label many states; output order matches input order.
pub fn label_batch(
    states: &[StateVector],
    config: &OracleConfig,
) -> Result<Vec<Action>, OracleError> {
    states.par_iter().map(|s| label(s, config)).collect()
}

/// Frog's column on the player layer, when it shows the nominal code.
pub fn frog_position(state: &StateVector) -> Option<usize> {
    state.0[PLAYER_OFFSET..PLAYER_OFFSET + WORLD_WIDTH]
        .iter()
        .position(|&c| c == u16::from(CODE_FROG))
}
