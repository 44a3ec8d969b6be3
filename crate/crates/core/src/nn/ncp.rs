//! Sparse layered wiring (sensory → inter → command → motor) applied as a
//! multiplicative mask on recurrent-cell weights.

use super::NnError;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NcpWiring {
    pub inter: usize,
    pub command: usize,
    pub motor: usize,
    pub sensory_fanout: usize,
    pub inter_fanout: usize,
    /// Outgoing recurrent synapses per command neuron.
    pub recurrent_command: usize,
    pub motor_fanin: usize,
    pub seed: u64,
}

impl Default for NcpWiring {
    fn default() -> Self {
        Self {
            inter: 18,
            command: 12,
            motor: 4,
            sensory_fanout: 6,
            inter_fanout: 4,
            recurrent_command: 4,
            motor_fanin: 6,
            seed: 22224,
        }
    }
}

impl NcpWiring {
    pub fn units(&self) -> usize {
        self.inter + self.command + self.motor
    }

    /// State index ranges: motor first so the outputs are `x[0..motor]`.
    pub fn motor_range(&self) -> std::ops::Range<usize> {
        0..self.motor
    }

    pub fn command_range(&self) -> std::ops::Range<usize> {
        self.motor..self.motor + self.command
    }

    pub fn inter_range(&self) -> std::ops::Range<usize> {
        self.motor + self.command..self.units()
    }
}

/// Dense 0/1 mask of shape `[units, sensory + units]` (row = destination
/// neuron, column = source: sensory inputs first, then neuron states).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WiringMask {
    pub rows: usize,
    pub cols: usize,
    pub sensory: usize,
    pub bits: Vec<bool>,
}

impl WiringMask {
    pub fn dense(rows: usize, cols: usize, sensory: usize) -> Self {
        Self {
            rows,
            cols,
            sensory,
            bits: vec![true; rows * cols],
        }
    }

    pub fn get(&self, dst: usize, src_col: usize) -> bool {
        self.bits[dst * self.cols + src_col]
    }

    fn set(&mut self, dst: usize, src_col: usize) {
        self.bits[dst * self.cols + src_col] = true;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Number of destinations in `dsts` fed by source column `src_col`.
    pub fn out_degree(&self, src_col: usize, dsts: std::ops::Range<usize>) -> usize {
        dsts.filter(|&d| self.get(d, src_col)).count()
    }

    /// Number of sources among `src_cols` feeding `dst`.
    pub fn in_degree(&self, dst: usize, src_cols: std::ops::Range<usize>) -> usize {
        src_cols.filter(|&c| self.get(dst, c)).count()
    }
}

pub fn build_ncp_wiring(w: &NcpWiring, sensory: usize) -> Result<WiringMask, NnError> {
    let checks = [
        (w.sensory_fanout, w.inter, "sensory fanout", "inter"),
        (w.inter_fanout, w.command, "inter fanout", "command"),
        (w.recurrent_command, w.command, "recurrent command synapses", "command"),
        (w.motor_fanin, w.command, "motor fan-in", "command"),
    ];
    for (fan, layer, what, layer_name) in checks {
        if fan == 0 || fan > layer {
            return Err(NnError::Wiring(format!("{what} {fan} not in 1..={layer} ({layer_name} size)")));
        }
    }
    if w.motor == 0 || sensory == 0 {
        return Err(NnError::Wiring("empty sensory or motor layer".into()));
    }
    let units = w.units();
    let mut m = WiringMask {
        rows: units,
        cols: sensory + units,
        sensory,
        bits: vec![false; units * (sensory + units)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let inter = w.inter_range();
    let command = w.command_range();
    let motor = w.motor_range();
    for s in 0..sensory {
        for j in sample(&mut rng, w.inter, w.sensory_fanout) {
            m.set(inter.start + j, s);
        }
    }
    for i in inter.clone() {
        for j in sample(&mut rng, w.command, w.inter_fanout) {
            m.set(command.start + j, sensory + i);
        }
    }
    for c in command.clone() {
        for j in sample(&mut rng, w.command, w.recurrent_command) {
            m.set(command.start + j, sensory + c);
        }
    }
    for mo in motor {
        for j in sample(&mut rng, w.command, w.motor_fanin) {
            m.set(mo, sensory + command.start + j);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_counts_exact_and_deterministic() {
        let w = NcpWiring::default();
        let f = 40;
        let m = build_ncp_wiring(&w, f).unwrap();
        assert_eq!(m, build_ncp_wiring(&w, f).unwrap());
        for s in 0..f {
            assert_eq!(m.out_degree(s, w.inter_range()), 6);
            assert_eq!(m.out_degree(s, 0..w.units()), 6);
        }
        for i in w.inter_range() {
            assert_eq!(m.out_degree(f + i, w.command_range()), 4);
        }
        for c in w.command_range() {
            assert_eq!(m.out_degree(f + c, w.command_range()), 4);
        }
        for mo in w.motor_range() {
            assert_eq!(m.in_degree(mo, f..f + w.units()), 6);
            let cmd = w.command_range();
            assert_eq!(m.in_degree(mo, f + cmd.start..f + cmd.end), 6);
        }
        let other = build_ncp_wiring(&NcpWiring { seed: 1, ..w }, f).unwrap();
        assert_ne!(m, other);
    }

    #[test]
    fn infeasible_fans_rejected() {
        let w = NcpWiring { sensory_fanout: 19, ..Default::default() };
        assert!(matches!(build_ncp_wiring(&w, 8), Err(NnError::Wiring(_))));
        let w = NcpWiring { motor_fanin: 0, ..Default::default() };
        assert!(build_ncp_wiring(&w, 8).is_err());
    }

    #[test]
    fn dense_mask_is_all_ones() {
        let m = WiringMask::dense(34, 74, 40);
        assert_eq!(m.count(), 34 * 74);
    }
}
