//! Frog and Toad: a two-agent side-scrolling game on a 32-cell strip.
//!
//! The world is an immutable value. [`WorldState::apply_action`] returns the
//! successor state and never mutates its receiver, so a world can be shared
//! freely across threads. Each world carries its own RNG stream, which drives
//! terrain generation on scroll and the help-leap draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const WORLD_WIDTH: usize = 32;
pub const STATE_DIM: usize = 100;
pub const MAX_ENERGY: u8 = 20;

pub const GROUND_OFFSET: usize = 0;
pub const PLAYER_OFFSET: usize = 32;
pub const FLY_OFFSET: usize = 64;
pub const STATS_OFFSET: usize = 96;

pub const SOLID: u8 = 1;
pub const ROUGH: u8 = 2;

pub const CODE_EMPTY: u8 = 0;
pub const CODE_FROG: u8 = 4;
pub const CODE_TOAD: u8 = 5;
pub const CODE_JUMPING: u8 = 6;
pub const CODE_LEAPING: u8 = 7;
pub const CODE_HELPING: u8 = 8;
pub const CODE_DISTRESSED: u8 = 9;

/// Probability that a helped agent is carried forward by a free leap.
pub const HELP_LEAP_PROB: f64 = 0.25;
pub const HOP_DISTANCE: usize = 1;
pub const LEAP_DISTANCE: usize = 5;
pub const JUMP_GAIN: u8 = 4;
pub const HELP_GAIN: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("{agent} has no energy and can only jump for flies (attempted {action})")]
    Stalled { agent: AgentId, action: Action },
    #[error("invalid state vector: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentId {
    Frog,
    Toad,
}

impl AgentId {
    pub const BOTH: [AgentId; 2] = [AgentId::Frog, AgentId::Toad];

    pub fn other(self) -> AgentId {
        match self {
            AgentId::Frog => AgentId::Toad,
            AgentId::Toad => AgentId::Frog,
        }
    }

    /// Player-layer code shown while the agent is hopping or idle.
    pub fn nominal_code(self) -> u8 {
        match self {
            AgentId::Frog => CODE_FROG,
            AgentId::Toad => CODE_TOAD,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Frog => f.write_str("frog"),
            AgentId::Toad => f.write_str("toad"),
        }
    }
}

/// Action labels. The discriminants are the training label encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Hop = 0,
    Jump = 1,
    Leap = 2,
    Help = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Hop, Action::Jump, Action::Leap, Action::Help];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Hop => "hop",
            Action::Jump => "jump",
            Action::Leap => "leap",
            Action::Help => "help",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activity {
    Hopping,
    Jumping,
    Leaping,
    Helping,
    Distressed,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub position: u8,
    pub energy: u8,
    pub score: u32,
    pub activity: Activity,
}

impl AgentState {
    fn new(position: u8, energy: u8) -> Self {
        let activity = if energy == 0 {
            Activity::Distressed
        } else {
            Activity::Idle
        };
        AgentState {
            position,
            energy,
            score: 0,
            activity,
        }
    }

    pub fn is_distressed(&self) -> bool {
        self.energy == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Probability that a solid cell starts a new rough run.
    pub rough_prob: f64,
    pub fly_prob: f64,
    /// Rough runs have a length drawn uniformly from `1..=rough_run_max`.
    pub rough_run_max: u8,
    pub initial_energy_min: u8,
    pub initial_energy_max: u8,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            rough_prob: 0.15,
            fly_prob: 0.15,
            rough_run_max: 3,
            initial_energy_min: 0,
            initial_energy_max: 8,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        for (name, p) in [("rough_prob", self.rough_prob), ("fly_prob", self.fly_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EnvError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if self.rough_run_max < 1 {
            return Err(EnvError::InvalidConfig(
                "rough_run_max must be at least 1".into(),
            ));
        }
        if self.initial_energy_min > self.initial_energy_max || self.initial_energy_max > MAX_ENERGY
        {
            return Err(EnvError::InvalidConfig(format!(
                "initial energy range {}..={} must satisfy min <= max <= {MAX_ENERGY}",
                self.initial_energy_min, self.initial_energy_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub ground: [u8; WORLD_WIDTH],
    pub flies: [u8; WORLD_WIDTH],
    pub frog: AgentState,
    pub toad: AgentState,
    pub rng_seed: u64,
    pub scroll_offset: u64,
    config: WorldConfig,
    pending_rough: u8,
    rng: ChaCha8Rng,
}

/// Build a fresh world. Identical `(config, seed)` pairs give identical worlds.
pub fn new_world(config: WorldConfig, seed: u64) -> Result<WorldState, EnvError> {
    config.validate()?;
    let mut world = WorldState {
        ground: [SOLID; WORLD_WIDTH],
        flies: [0; WORLD_WIDTH],
        frog: AgentState::new(0, 0),
        toad: AgentState::new(0, 0),
        rng_seed: seed,
        scroll_offset: 0,
        config,
        pending_rough: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    for i in 0..WORLD_WIDTH {
        let (ground, fly) = world.next_column();
        world.ground[i] = ground;
        world.flies[i] = fly;
    }
    // Agents start in the left half on distinct cells.
    let frog_pos = world.rng.gen_range(0..WORLD_WIDTH as u8 / 2);
    let mut toad_pos = world.rng.gen_range(0..WORLD_WIDTH as u8 / 2 - 1);
    if toad_pos >= frog_pos {
        toad_pos += 1;
    }
    let energy_range = config.initial_energy_min..=config.initial_energy_max;
    let frog_energy = world.rng.gen_range(energy_range.clone());
    let toad_energy = world.rng.gen_range(energy_range);
    world.frog = AgentState::new(frog_pos, frog_energy);
    world.toad = AgentState::new(toad_pos, toad_energy);
    Ok(world)
}

/// Actions available to `agent`: a stalled agent may only jump.
pub fn legal_actions(world: &WorldState, agent: AgentId) -> Vec<Action> {
    if world.agent(agent).energy == 0 {
        vec![Action::Jump]
    } else {
        Action::ALL.to_vec()
    }
}

impl WorldState {
    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn agent(&self, id: AgentId) -> &AgentState {
        match id {
            AgentId::Frog => &self.frog,
            AgentId::Toad => &self.toad,
        }
    }

    fn agent_mut(&mut self, id: AgentId) -> &mut AgentState {
        match id {
            AgentId::Frog => &mut self.frog,
            AgentId::Toad => &mut self.toad,
        }
    }

    pub fn legal_actions(&self, agent: AgentId) -> Vec<Action> {
        legal_actions(self, agent)
    }

    pub fn encode(&self, zero_stats: bool) -> StateVector {
        encode(self, zero_stats)
    }

    /// Start `agent`'s turn: its displayed action resets to the nominal code
    /// unless it is distressed.
    pub fn begin_turn(&self, agent: AgentId) -> WorldState {
        let mut next = self.clone();
        let state = next.agent_mut(agent);
        if state.activity != Activity::Distressed {
            state.activity = Activity::Idle;
        }
        next
    }

    pub fn apply_action(&self, agent: AgentId, action: Action) -> Result<WorldState, EnvError> {
        let actor = self.agent(agent);
        if actor.energy == 0 && action != Action::Jump {
            return Err(EnvError::Stalled { agent, action });
        }
        let mut next = self.clone();
        match action {
            Action::Hop => {
                let (moved, landing) = next.advance(agent, HOP_DISTANCE);
                let me = next.agent_mut(agent);
                if moved > 0 {
                    me.score += 1;
                    if landing == ROUGH {
                        me.energy -= 1;
                    }
                }
                me.activity = Activity::Hopping;
            }
            Action::Jump => {
                let pos = next.agent(agent).position as usize;
                if next.flies[pos] == 1 {
                    next.flies[pos] = 0;
                    let me = next.agent_mut(agent);
                    me.energy = (me.energy + JUMP_GAIN).min(MAX_ENERGY);
                }
                next.agent_mut(agent).activity = Activity::Jumping;
            }
            Action::Leap => {
                next.advance(agent, LEAP_DISTANCE);
                let me = next.agent_mut(agent);
                me.energy -= 1;
                me.activity = Activity::Leaping;
            }
            Action::Help => {
                let me = next.agent_mut(agent);
                me.energy -= 1;
                me.activity = Activity::Helping;
                let other = agent.other();
                let them = next.agent_mut(other);
                them.energy = (them.energy + HELP_GAIN).min(MAX_ENERGY);
                if next.rng.gen_bool(HELP_LEAP_PROB) {
                    next.advance(other, LEAP_DISTANCE);
                }
            }
        }
        for id in AgentId::BOTH {
            let a = next.agent_mut(id);
            if a.energy == 0 {
                a.activity = Activity::Distressed;
            } else if a.activity == Activity::Distressed {
                a.activity = Activity::Idle;
            }
        }
        Ok(next)
    }

    fn next_column(&mut self) -> (u8, u8) {
        let ground = if self.pending_rough > 0 {
            self.pending_rough -= 1;
            ROUGH
        } else if self.rng.gen_bool(self.config.rough_prob) {
            let run = self.rng.gen_range(1..=self.config.rough_run_max);
            self.pending_rough = run - 1;
            ROUGH
        } else {
            SOLID
        };
        let fly = u8::from(self.rng.gen_bool(self.config.fly_prob));
        (ground, fly)
    }

    /// Shift the whole strip left by `cells`, generating new columns on the right.
    fn scroll(&mut self, cells: usize) {
        if cells == 0 {
            return;
        }
        self.ground.rotate_left(cells);
        self.flies.rotate_left(cells);
        for i in WORLD_WIDTH - cells..WORLD_WIDTH {
            let (ground, fly) = self.next_column();
            self.ground[i] = ground;
            self.flies[i] = fly;
        }
        self.frog.position -= cells as u8;
        self.toad.position -= cells as u8;
        self.scroll_offset += cells as u64;
    }

    /// Move `agent` forward by `steps` cells. Landing on the partner's cell
    /// carries the mover one cell further. Passing the right edge scrolls the
    /// strip as far as the trailing agent allows; the rest of the move is
    /// clamped. Returns the distance covered (including scroll) and the
    /// terrain code of the landing cell.
    fn advance(&mut self, agent: AgentId, steps: usize) -> (usize, u8) {
        let me = self.agent(agent).position as usize;
        let other = self.agent(agent.other()).position as usize;
        let mut target = me + steps;
        if target == other {
            target += 1;
        }
        let last = WORLD_WIDTH - 1;
        let mut shift = 0;
        if target > last {
            shift = (target - last).min(me.min(other));
            self.scroll(shift);
            target -= shift;
        }
        let me = me - shift;
        let other = other - shift;
        if target > last {
            target = last;
        }
        if target == other {
            target -= 1;
        }
        let target = target.max(me);
        self.agent_mut(agent).position = target as u8;
        (target - me + shift, self.ground[target])
    }
}

/// The 100-cell encoded game state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateVector(pub [u16; STATE_DIM]);

impl StateVector {
    pub fn ground(&self) -> &[u16] {
        &self.0[GROUND_OFFSET..PLAYER_OFFSET]
    }

    pub fn players(&self) -> &[u16] {
        &self.0[PLAYER_OFFSET..FLY_OFFSET]
    }

    pub fn flies(&self) -> &[u16] {
        &self.0[FLY_OFFSET..STATS_OFFSET]
    }

    pub fn stats(&self) -> &[u16] {
        &self.0[STATS_OFFSET..]
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if let Some(i) = self.ground().iter().position(|&c| c != 1 && c != 2) {
            return Err(EnvError::InvalidState(format!(
                "ground cell {i} has code {}",
                self.0[GROUND_OFFSET + i]
            )));
        }
        let mut occupied = 0;
        for (i, &c) in self.players().iter().enumerate() {
            match c {
                0 => {}
                4..=9 => occupied += 1,
                _ => {
                    return Err(EnvError::InvalidState(format!(
                        "player cell {} has code {c}",
                        PLAYER_OFFSET + i
                    )))
                }
            }
        }
        if occupied > 2 {
            return Err(EnvError::InvalidState(format!(
                "{occupied} occupied player cells"
            )));
        }
        if let Some(i) = self.flies().iter().position(|&c| c > 1) {
            return Err(EnvError::InvalidState(format!(
                "fly cell {} has code {}",
                FLY_OFFSET + i,
                self.0[FLY_OFFSET + i]
            )));
        }
        Ok(())
    }

    pub fn with_zeroed_stats(mut self) -> StateVector {
        self.0[STATS_OFFSET..].fill(0);
        self
    }

    /// Narrow to byte features. Fails when any cell exceeds `u8`, which can
    /// only happen in the statistics cells.
    pub fn to_bytes(&self) -> Option<[u8; STATE_DIM]> {
        let mut out = [0u8; STATE_DIM];
        for (o, &v) in out.iter_mut().zip(self.0.iter()) {
            *o = u8::try_from(v).ok()?;
        }
        Some(out)
    }

    pub fn from_bytes(bytes: &[u8; STATE_DIM]) -> StateVector {
        let mut out = [0u16; STATE_DIM];
        for (o, &b) in out.iter_mut().zip(bytes.iter()) {
            *o = u16::from(b);
        }
        StateVector(out)
    }
}

fn player_code(agent: AgentId, activity: Activity) -> u8 {
    match activity {
        Activity::Hopping | Activity::Idle => agent.nominal_code(),
        Activity::Jumping => CODE_JUMPING,
        Activity::Leaping => CODE_LEAPING,
        Activity::Helping => CODE_HELPING,
        Activity::Distressed => CODE_DISTRESSED,
    }
}

/// Encode the world into the 100-cell layout. Statistics cells hold
/// (frog energy, toad energy, frog score, toad score) unless `zero_stats`.
pub fn encode(world: &WorldState, zero_stats: bool) -> StateVector {
    let mut v = [0u16; STATE_DIM];
    for i in 0..WORLD_WIDTH {
        v[GROUND_OFFSET + i] = u16::from(world.ground[i]);
        v[FLY_OFFSET + i] = u16::from(world.flies[i]);
    }
    for id in AgentId::BOTH {
        let a = world.agent(id);
        v[PLAYER_OFFSET + a.position as usize] = u16::from(player_code(id, a.activity));
    }
    if !zero_stats {
        v[STATS_OFFSET] = u16::from(world.frog.energy);
        v[STATS_OFFSET + 1] = u16::from(world.toad.energy);
        v[STATS_OFFSET + 2] = world.frog.score.min(u32::from(u16::MAX)) as u16;
        v[STATS_OFFSET + 3] = world.toad.score.min(u32::from(u16::MAX)) as u16;
    }
    StateVector(v)
}
