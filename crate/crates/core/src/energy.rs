//! Energy accounting: radio transmission/reception, per-record computation,
//! idle/sleep duty, and optional solar harvesting. Every joule flowing in or
//! out of a battery passes through `drain` or `harvest`, which is what makes
//! the per-node audit ledger closable.

use serde::{Deserialize, Serialize};

use crate::error::EnergyError;

/// Node battery. Residual moves only through `drain` and `harvest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_j: f64,
    pub residual_j: f64,
    pub harvest_rate_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrainOutcome {
    Alive,
    Dead,
}

impl Battery {
    pub fn new(capacity_j: f64, harvest_rate_w: f64) -> Self {
        Self {
            capacity_j,
            residual_j: capacity_j,
            harvest_rate_w,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.residual_j > 0.0
    }

    /// Removes up to `amount` joules, clamping at zero. Returns `Dead` once
    /// the battery is exhausted; the actually removed amount is written to
    /// `removed`.
    pub fn drain(&mut self, amount: f64, removed: &mut f64) -> Result<DrainOutcome, EnergyError> {
        if amount < 0.0 {
            return Err(EnergyError::NegativeDrain(amount));
        }
        *removed = amount.min(self.residual_j);
        self.residual_j -= *removed;
        if self.residual_j > 0.0 {
            Ok(DrainOutcome::Alive)
        } else {
            self.residual_j = 0.0;
            Ok(DrainOutcome::Dead)
        }
    }

    /// Adds harvested energy for `dt` seconds at the given daylight fraction,
    /// clamped to remaining capacity. Returns the amount actually added.
    pub fn harvest(&mut self, dt_s: f64, daylight_fraction: f64) -> f64 {
        debug_assert!(dt_s >= 0.0);
        let headroom = self.capacity_j - self.residual_j;
        let mut added = (self.harvest_rate_w * dt_s * daylight_fraction)
            .min(headroom)
            .max(0.0);
        // residual + (capacity - residual) can round one ulp past capacity;
        // nudge the recorded delta down until the sum respects the bound
        let mut next = self.residual_j + added;
        while next > self.capacity_j && added > 0.0 {
            added = added.next_down().max(0.0);
            next = self.residual_j + added;
        }
        self.residual_j = next;
        added
    }

    /// Residual energy on the integer 0..10 scale used by the premiership
    /// score: floor(10 * residual / capacity), clamped.
    pub fn normalized_residual(&self) -> i64 {
        let scaled = (10.0 * self.residual_j / self.capacity_j).floor();
        (scaled as i64).clamp(0, 10)
    }
}

/// First-order radio model: electronics cost per bit plus a d^2 amplifier
/// term, with a separate per-bit reception cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioCostModel {
    pub electronics_j_per_bit: f64,
    pub amplifier_j_per_bit_m2: f64,
    pub rx_j_per_bit: f64,
}

impl Default for RadioCostModel {
    fn default() -> Self {
        Self {
            electronics_j_per_bit: 50e-9,
            amplifier_j_per_bit_m2: 100e-12,
            rx_j_per_bit: 50e-9,
        }
    }
}

impl RadioCostModel {
    pub fn validate(&self) -> Result<(), EnergyError> {
        for (key, v) in [
            ("energy.electronics_j_per_bit", self.electronics_j_per_bit),
            ("energy.amplifier_j_per_bit_m2", self.amplifier_j_per_bit_m2),
            ("energy.rx_j_per_bit", self.rx_j_per_bit),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(EnergyError::Config {
                    key,
                    reason: "must be > 0".into(),
                });
            }
        }
        Ok(())
    }

    /// Energy to transmit `payload_bytes` over `distance_m`:
    /// 8 * payload * (electronics + amplifier * d^2).
    pub fn tx_cost(&self, payload_bytes: u32, distance_m: f64) -> f64 {
        let bits = 8.0 * payload_bytes as f64;
        bits * (self.electronics_j_per_bit + self.amplifier_j_per_bit_m2 * distance_m * distance_m)
    }

    /// Energy to receive `payload_bytes`.
    pub fn rx_cost(&self, payload_bytes: u32) -> f64 {
        8.0 * payload_bytes as f64 * self.rx_j_per_bit
    }
}

/// Idle/active duty power plus per-record processing cost (the packetize,
/// compress, encrypt step is charged as a flat per-record CPU cost).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DutyCostModel {
    pub active_power_w: f64,
    pub sleep_power_w: f64,
    pub cpu_cost_per_record_j: f64,
}

impl Default for DutyCostModel {
    fn default() -> Self {
        Self {
            active_power_w: 5e-3,
            sleep_power_w: 1e-6,
            cpu_cost_per_record_j: 5e-6,
        }
    }
}

impl DutyCostModel {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.active_power_w < 0.0 || self.sleep_power_w < 0.0 || self.cpu_cost_per_record_j < 0.0
        {
            return Err(EnergyError::Config {
                key: "energy.duty",
                reason: "powers and record cost must be >= 0".into(),
            });
        }
        if self.sleep_power_w >= self.active_power_w {
            return Err(EnergyError::Config {
                key: "energy.sleep_power_w",
                reason: "must be below active_power_w".into(),
            });
        }
        Ok(())
    }

    /// Energy for one round split between `active_s` awake and the remainder
    /// asleep.
    pub fn round_cost(&self, round_s: f64, active_s: f64) -> f64 {
        let active = active_s.min(round_s);
        self.active_power_w * active + self.sleep_power_w * (round_s - active)
    }
}

/// Why a battery changed, for the audit ledger and its CSV export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyCause {
    Tx,
    Rx,
    Cpu,
    Duty,
    Harvest,
    Kill,
    /// Scripted scenario adjustment (test fixtures).
    Adjust,
}

impl EnergyCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnergyCause::Tx => "tx",
            EnergyCause::Rx => "rx",
            EnergyCause::Cpu => "cpu",
            EnergyCause::Duty => "duty",
            EnergyCause::Harvest => "harvest",
            EnergyCause::Kill => "kill",
            EnergyCause::Adjust => "adjust",
        }
    }
}

/// One signed battery movement. `delta_j` is the amount actually applied
/// after clamping, so replaying a node's entries in order reproduces its
/// final residual exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEntry {
    pub node: u32,
    pub time_ms: u64,
    pub delta_j: f64,
    pub cause: EnergyCause,
}

/// Append-only per-run energy ledger.
#[derive(Debug, Default, Clone)]
pub struct EnergyAudit {
    pub entries: Vec<EnergyEntry>,
}

impl EnergyAudit {
    pub fn record(&mut self, node: u32, time_ms: u64, delta_j: f64, cause: EnergyCause) {
        self.entries.push(EnergyEntry {
            node,
            time_ms,
            delta_j,
            cause,
        });
    }

    /// Replays one node's deltas in recorded order starting from `initial_j`.
    pub fn replay(&self, node: u32, initial_j: f64) -> f64 {
        let mut acc = initial_j;
        for e in self.entries.iter().filter(|e| e.node == node) {
            acc += e.delta_j;
        }
        acc
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,time_ms,delta_j,cause\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{:e},{}\n",
                e.node,
                e.time_ms,
                e.delta_j,
                e.cause.as_str()
            ));
        }
        out
    }
}
