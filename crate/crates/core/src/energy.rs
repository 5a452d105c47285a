//! Linear software energy model.
//!
//! Energy is the integral of `voltage * current(state)` over the time each
//! hardware component spends in a state. Voltage is held in millivolts,
//! currents in microamps and time in microseconds, so every accrual is an
//! exact integer number of femtojoules and the ledger can be audited against
//! the per-state time totals with no rounding slack.

use thiserror::Error;

use crate::types::SimTime;

const FJ_PER_J: f64 = 1e15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("radio tx current ({tx} mA) is below radio idle current ({idle} mA)")]
    TxBelowIdle { tx: f64, idle: f64 },
}

/// Battery capacity `V * Ah * 3600` in joules.
pub fn battery_capacity(voltage: f64, amp_hours: f64) -> Result<f64, EnergyError> {
    if !(voltage > 0.0) {
        return Err(EnergyError::NonPositive {
            name: "voltage",
            value: voltage,
        });
    }
    if !(amp_hours > 0.0) {
        return Err(EnergyError::NonPositive {
            name: "amp_hours",
            value: amp_hours,
        });
    }
    Ok(voltage * amp_hours * 3600.0)
}

/// Default routing threshold on residual energy, in joules.
pub const DEFAULT_ALPHA_J: f64 = 14_400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PowerState {
    CpuActive,
    CpuSleep,
    RadioTx,
    RadioRx,
    RadioIdle,
}

impl PowerState {
    pub const ALL: [PowerState; 5] = [
        PowerState::CpuActive,
        PowerState::CpuSleep,
        PowerState::RadioTx,
        PowerState::RadioRx,
        PowerState::RadioIdle,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PowerState::CpuActive => "cpu_active",
            PowerState::CpuSleep => "cpu_sleep",
            PowerState::RadioTx => "radio_tx",
            PowerState::RadioRx => "radio_rx",
            PowerState::RadioIdle => "radio_idle",
        }
    }
}

/// Supply voltage and per-state current draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnergyBudget {
    voltage_mv: u64,
    current_ua: [u64; 5],
}

impl EnergyBudget {
    /// Builds a budget from volts and milliamps. Values are rounded to the
    /// nearest millivolt and microamp.
    pub fn new(
        voltage: f64,
        cpu_active_ma: f64,
        cpu_sleep_ma: f64,
        radio_tx_ma: f64,
        radio_rx_ma: f64,
        radio_idle_ma: f64,
    ) -> Result<Self, EnergyError> {
        if !(voltage > 0.0) {
            return Err(EnergyError::NonPositive {
                name: "voltage",
                value: voltage,
            });
        }
        let currents = [
            ("cpu_active_ma", cpu_active_ma),
            ("cpu_sleep_ma", cpu_sleep_ma),
            ("radio_tx_ma", radio_tx_ma),
            ("radio_rx_ma", radio_rx_ma),
            ("radio_idle_ma", radio_idle_ma),
        ];
        let mut current_ua = [0u64; 5];
        for (slot, (name, ma)) in currents.into_iter().enumerate() {
            if !(ma >= 0.0) || !ma.is_finite() {
                return Err(EnergyError::Negative { name, value: ma });
            }
            current_ua[slot] = (ma * 1000.0).round() as u64;
        }
        if radio_tx_ma < radio_idle_ma {
            return Err(EnergyError::TxBelowIdle {
                tx: radio_tx_ma,
                idle: radio_idle_ma,
            });
        }
        Ok(EnergyBudget {
            voltage_mv: (voltage * 1000.0).round() as u64,
            current_ua,
        })
    }

    /// IRIS-class default: 3 V, CPU 8 mA / 8 uA, radio 17 / 15.5 / 0.02 mA.
    pub fn iris() -> Self {
        EnergyBudget::new(3.0, 8.0, 0.008, 17.0, 15.5, 0.02).expect("static budget is valid")
    }

    pub fn voltage(&self) -> f64 {
        self.voltage_mv as f64 / 1000.0
    }

    pub fn current_ma(&self, state: PowerState) -> f64 {
        self.current_ua[state.slot()] as f64 / 1000.0
    }

    /// Energy in femtojoules for `micros` spent in `state`.
    pub fn femtojoules(&self, state: PowerState, micros: u64) -> u128 {
        u128::from(self.voltage_mv) * u128::from(self.current_ua[state.slot()]) * u128::from(micros)
    }

    pub fn joules(&self, state: PowerState, duration: SimTime) -> f64 {
        self.femtojoules(state, duration.micros()) as f64 / FJ_PER_J
    }
}

impl Default for EnergyBudget {
    fn default() -> Self {
        EnergyBudget::iris()
    }
}

/// Per-node battery ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnergyAccount {
    capacity_fj: u128,
    dead_threshold_fj: u128,
    drawn_fj: u128,
    per_state_us: [u64; 5],
    alive: bool,
    ignored_accruals: u64,
}

impl EnergyAccount {
    pub fn new(capacity_joules: f64, dead_threshold_joules: f64) -> Result<Self, EnergyError> {
        if !(capacity_joules > 0.0) || !capacity_joules.is_finite() {
            return Err(EnergyError::NonPositive {
                name: "capacity_joules",
                value: capacity_joules,
            });
        }
        if !(dead_threshold_joules >= 0.0) {
            return Err(EnergyError::Negative {
                name: "dead_threshold_joules",
                value: dead_threshold_joules,
            });
        }
        Ok(EnergyAccount {
            capacity_fj: (capacity_joules * FJ_PER_J).round() as u128,
            dead_threshold_fj: (dead_threshold_joules * FJ_PER_J).round() as u128,
            drawn_fj: 0,
            per_state_us: [0; 5],
            alive: true,
            ignored_accruals: 0,
        })
    }

    /// Charges `duration` spent in `state`. Returns `true` if this accrual
    /// killed the node. Accruals on a dead node are counted and ignored.
    pub fn accrue(&mut self, budget: &EnergyBudget, state: PowerState, duration: SimTime) -> bool {
        if !self.alive {
            self.ignored_accruals += 1;
            return false;
        }
        let micros = duration.micros();
        if micros == 0 {
            return false;
        }
        self.per_state_us[state.slot()] += micros;
        self.drawn_fj += budget.femtojoules(state, micros);
        if self.residual_fj() <= self.dead_threshold_fj {
            self.alive = false;
            return true;
        }
        false
    }

    fn residual_fj(&self) -> u128 {
        self.capacity_fj.saturating_sub(self.drawn_fj)
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    pub fn capacity_joules(&self) -> f64 {
        self.capacity_fj as f64 / FJ_PER_J
    }

    /// Consumed energy, capped at capacity.
    pub fn consumed_joules(&self) -> f64 {
        self.drawn_fj.min(self.capacity_fj) as f64 / FJ_PER_J
    }

    /// Residual energy, floored at zero.
    pub fn residual_energy(&self) -> f64 {
        self.residual_fj() as f64 / FJ_PER_J
    }

    pub fn dead_threshold_joules(&self) -> f64 {
        self.dead_threshold_fj as f64 / FJ_PER_J
    }

    /// Raw ledger total, including any overshoot on the final accrual.
    pub fn drawn_femtojoules(&self) -> u128 {
        self.drawn_fj
    }

    pub fn time_in(&self, state: PowerState) -> SimTime {
        SimTime(self.per_state_us[state.slot()])
    }

    pub fn ignored_accruals(&self) -> u64 {
        self.ignored_accruals
    }

    /// `voltage * sum(current * time)` recomputed from the per-state totals.
    pub fn recomputed_femtojoules(&self, budget: &EnergyBudget) -> u128 {
        PowerState::ALL
            .iter()
            .map(|&s| budget.femtojoules(s, self.per_state_us[s.slot()]))
            .sum()
    }
}
