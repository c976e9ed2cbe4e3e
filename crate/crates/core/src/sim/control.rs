//! The control counter and the phase it decodes to.
//!
//! Per timestep each cell takes five cycles (gates i, f, g, o then a store),
//! followed once per window by 20 FC1 cycles plus a store and 2 FC2 cycles
//! plus a store.

use core::fmt;

use crate::net::{Gate, FC1_NEURONS, FC2_NEURONS};
use crate::sim::sram::{address_of_fc1, address_of_fc2, address_of_gate};

pub const CYCLES_PER_CELL: usize = 5;
pub const FC1_CYCLES: usize = FC1_NEURONS + 1;
pub const FC2_CYCLES: usize = FC2_NEURONS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Gate pre-activation for one cell; `gate: None` is the store cycle.
    Lstm { t: usize, cell: usize, gate: Option<Gate> },
    /// FC1 neuron MAC; `None` is the store cycle.
    Fc1 { neuron: Option<usize> },
    Fc2 { neuron: Option<usize> },
}

impl Phase {
    /// SRAM word read in this phase, if any.
    pub fn sram_address(&self) -> Option<usize> {
        match *self {
            Phase::Lstm { cell, gate: Some(g), .. } => address_of_gate(cell, g).ok(),
            Phase::Fc1 { neuron: Some(j) } => address_of_fc1(j).ok(),
            Phase::Fc2 { neuron: Some(k) } => address_of_fc2(k).ok(),
            _ => None,
        }
    }

    pub fn is_store(&self) -> bool {
        matches!(
            self,
            Phase::Lstm { gate: None, .. } | Phase::Fc1 { neuron: None } | Phase::Fc2 { neuron: None }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Lstm { .. } => "lstm",
            Phase::Fc1 { .. } => "fc1",
            Phase::Fc2 { .. } => "fc2",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Lstm { t, cell, gate: Some(g) } => write!(f, "lstm t={t} cell={cell} gate={}", g.name()),
            Phase::Lstm { t, cell, gate: None } => write!(f, "lstm t={t} cell={cell} store"),
            Phase::Fc1 { neuron: Some(j) } => write!(f, "fc1 neuron={j}"),
            Phase::Fc1 { neuron: None } => write!(f, "fc1 store"),
            Phase::Fc2 { neuron: Some(k) } => write!(f, "fc2 neuron={k}"),
            Phase::Fc2 { neuron: None } => write!(f, "fc2 store"),
        }
    }
}

/// Cycle schedule of one inference for `timesteps` samples and `cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub timesteps: usize,
    pub cells: usize,
}

impl Schedule {
    pub fn new(timesteps: usize, cells: usize) -> Self {
        Self { timesteps, cells }
    }

    pub fn lstm_cycles(&self) -> usize {
        self.timesteps * self.cells * CYCLES_PER_CELL
    }

    pub fn total_cycles(&self) -> usize {
        self.lstm_cycles() + FC1_CYCLES + FC2_CYCLES
    }

    pub fn sram_reads(&self) -> usize {
        self.timesteps * self.cells * 4 + FC1_NEURONS + FC2_NEURONS
    }

    pub fn phase(&self, cycle: usize) -> Option<Phase> {
        let lstm = self.lstm_cycles();
        if cycle < lstm {
            let per_t = self.cells * CYCLES_PER_CELL;
            let (t, rem) = (cycle / per_t, cycle % per_t);
            let (cell, sub) = (rem / CYCLES_PER_CELL, rem % CYCLES_PER_CELL);
            let gate = Gate::ALL.get(sub).copied();
            return Some(Phase::Lstm { t, cell, gate });
        }
        let c = cycle - lstm;
        if c < FC1_CYCLES {
            return Some(Phase::Fc1 { neuron: (c < FC1_NEURONS).then_some(c) });
        }
        let c = c - FC1_CYCLES;
        if c < FC2_CYCLES {
            return Some(Phase::Fc2 { neuron: (c < FC2_NEURONS).then_some(c) });
        }
        None
    }
}

/// Free-running counter that wraps at the end of an inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlCounter {
    schedule: Schedule,
    cycle: usize,
}

impl ControlCounter {
    pub fn new(schedule: Schedule) -> Self {
        Self { schedule, cycle: 0 }
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn phase(&self) -> Phase {
        self.schedule.phase(self.cycle).expect("counter stays within the schedule")
    }

    pub fn advance(&mut self) {
        self.cycle = (self.cycle + 1) % self.schedule.total_cycles();
    }

    pub fn reset(&mut self) {
        self.cycle = 0;
    }
}
