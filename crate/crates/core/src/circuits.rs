//! Succinct circuit instances and their evaluation.
//!
//! A circuit with `N` gates is never stored as a whole by the rest of the
//! crate; everything goes through a [`SuccinctOracle`] that answers "what is
//! gate `i`?". Two oracles ship here: an explicit [`GateTable`] and the
//! formula-backed [`TxOracle`] for the doubling-OR family used to show that the
//! no-signaling soundness analysis is tight.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("gate count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("output gate {k} is out of range for {gates} gates")]
    OutputOutOfRange { k: usize, gates: usize },
    #[error("gate {gate}: {kind} expects {expected} inputs, got {got}")]
    Arity {
        gate: usize,
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("gate {gate}: input {input} does not precede it")]
    NotAcyclic { gate: usize, input: usize },
    #[error("instance declares n_bits = {n_bits} but lists {gates} gates")]
    GateCountMismatch { n_bits: u32, gates: usize },
    #[error("n_bits = {0} is too large")]
    TooLarge(u32),
    #[error("tightness family needs h >= 1")]
    ZeroHeight,
    #[error("malformed instance JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Zero,
    One,
    And,
    Or,
    Not,
}

impl GateKind {
    pub const ALL: [GateKind; 5] = [
        GateKind::Zero,
        GateKind::One,
        GateKind::And,
        GateKind::Or,
        GateKind::Not,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Zero | GateKind::One => 0,
            GateKind::Not => 1,
            GateKind::And | GateKind::Or => 2,
        }
    }

    /// Output of the gate on the given input values. `inputs` must have
    /// exactly [`arity`](Self::arity) entries.
    pub fn apply(self, inputs: &[bool]) -> bool {
        debug_assert_eq!(inputs.len(), self.arity());
        match self {
            GateKind::Zero => false,
            GateKind::One => true,
            GateKind::Not => !inputs[0],
            GateKind::And => inputs[0] && inputs[1],
            GateKind::Or => inputs[0] || inputs[1],
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GateKind::Zero => "ZERO",
            GateKind::One => "ONE",
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Not => "NOT",
        };
        f.write_str(name)
    }
}

/// Kind of a gate together with the indices feeding it, in the order the
/// descriptor reports them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GateDescriptor {
    pub kind: GateKind,
    #[serde(default)]
    pub inputs: Vec<usize>,
}

impl GateDescriptor {
    pub fn zero() -> Self {
        Self::constant(false)
    }

    pub fn one() -> Self {
        Self::constant(true)
    }

    pub fn constant(value: bool) -> Self {
        let kind = if value { GateKind::One } else { GateKind::Zero };
        GateDescriptor {
            kind,
            inputs: Vec::new(),
        }
    }

    pub fn not(a: usize) -> Self {
        GateDescriptor {
            kind: GateKind::Not,
            inputs: vec![a],
        }
    }

    pub fn and(a: usize, b: usize) -> Self {
        GateDescriptor {
            kind: GateKind::And,
            inputs: vec![a, b],
        }
    }

    pub fn or(a: usize, b: usize) -> Self {
        GateDescriptor {
            kind: GateKind::Or,
            inputs: vec![a, b],
        }
    }

    /// Checks arity and that every input precedes `index`.
    pub fn validate(&self, index: usize) -> Result<(), CircuitError> {
        if self.inputs.len() != self.kind.arity() {
            return Err(CircuitError::Arity {
                gate: index,
                kind: self.kind,
                expected: self.kind.arity(),
                got: self.inputs.len(),
            });
        }
        if let Some(&input) = self.inputs.iter().find(|&&j| j >= index) {
            return Err(CircuitError::NotAcyclic { gate: index, input });
        }
        Ok(())
    }
}

/// The descriptor `D` of a succinct representation: answers queries about
/// single gates without materializing the circuit.
pub trait SuccinctOracle: fmt::Debug + Send + Sync {
    fn gate_count(&self) -> usize;

    /// Descriptor of gate `index`, for `index < gate_count()`.
    fn describe(&self, index: usize) -> GateDescriptor;
}

/// Explicit list of gate descriptors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateTable(pub Vec<GateDescriptor>);

impl SuccinctOracle for GateTable {
    fn gate_count(&self) -> usize {
        self.0.len()
    }

    fn describe(&self, index: usize) -> GateDescriptor {
        self.0[index].clone()
    }
}

/// Doubling-OR circuit of height `h`: two ZERO gates followed by `h` levels of
/// two identical OR gates reading the previous level, padded with unused
/// ZERO gates up to a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxOracle {
    pub h: usize,
    gate_count: usize,
}

impl TxOracle {
    pub fn new(h: usize) -> Result<Self, CircuitError> {
        if h == 0 {
            return Err(CircuitError::ZeroHeight);
        }
        Ok(TxOracle {
            h,
            gate_count: (2 * h + 2).next_power_of_two(),
        })
    }

    /// Number of gates before padding.
    pub fn live_gates(&self) -> usize {
        2 * self.h + 2
    }
}

impl SuccinctOracle for TxOracle {
    fn gate_count(&self) -> usize {
        self.gate_count
    }

    fn describe(&self, index: usize) -> GateDescriptor {
        assert!(index < self.gate_count, "gate {index} out of range");
        let level = index / 2;
        if level == 0 || level > self.h {
            GateDescriptor::zero()
        } else {
            GateDescriptor::or(2 * (level - 1), 2 * (level - 1) + 1)
        }
    }
}

/// A Succinct Circuit Value instance `(N, D, k)`.
#[derive(Debug, Clone)]
pub struct Instance {
    oracle: Arc<dyn SuccinctOracle>,
    n_bits: u32,
    k: usize,
}

impl Instance {
    /// Wraps an oracle after scanning every descriptor for arity and
    /// acyclicity.
    pub fn new(oracle: Arc<dyn SuccinctOracle>, k: usize) -> Result<Self, CircuitError> {
        let n = oracle.gate_count();
        if !n.is_power_of_two() {
            return Err(CircuitError::NotPowerOfTwo(n));
        }
        if k >= n {
            return Err(CircuitError::OutputOutOfRange { k, gates: n });
        }
        for i in 0..n {
            oracle.describe(i).validate(i)?;
        }
        Ok(Instance {
            n_bits: n.trailing_zeros(),
            oracle,
            k,
        })
    }

    /// Builds an instance from explicit gates, appending unused ZERO gates
    /// until the count is a power of two.
    pub fn from_gates(mut gates: Vec<GateDescriptor>, k: usize) -> Result<Self, CircuitError> {
        let n = gates.len().max(1).next_power_of_two();
        gates.resize(n, GateDescriptor::zero());
        Instance::new(Arc::new(GateTable(gates)), k)
    }

    pub fn gate_count(&self) -> usize {
        1 << self.n_bits
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    /// Index of the output gate.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn describe(&self, index: usize) -> GateDescriptor {
        self.oracle.describe(index)
    }

    pub fn oracle(&self) -> &Arc<dyn SuccinctOracle> {
        &self.oracle
    }

    /// Same circuit with a different output gate.
    pub fn with_output(&self, k: usize) -> Result<Self, CircuitError> {
        if k >= self.gate_count() {
            return Err(CircuitError::OutputOutOfRange {
                k,
                gates: self.gate_count(),
            });
        }
        Ok(Instance {
            oracle: Arc::clone(&self.oracle),
            n_bits: self.n_bits,
            k,
        })
    }

    /// All descriptors, in index order.
    pub fn gates(&self) -> Vec<GateDescriptor> {
        (0..self.gate_count()).map(|i| self.describe(i)).collect()
    }

    pub fn is_yes(&self) -> Result<bool, CircuitError> {
        Ok(evaluate(self)?.is_yes(self.k))
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            n_bits: self.n_bits,
            k: self.k,
            gates: self.gates(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CircuitError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }
}

/// On-disk instance format:
/// `{"n_bits": int, "k": int, "gates": [{"kind": "ZERO|ONE|AND|OR|NOT", "inputs": [int]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n_bits: u32,
    pub k: usize,
    pub gates: Vec<GateDescriptor>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance, CircuitError> {
        if self.n_bits >= usize::BITS - 1 {
            return Err(CircuitError::TooLarge(self.n_bits));
        }
        if self.gates.len() != 1usize << self.n_bits {
            return Err(CircuitError::GateCountMismatch {
                n_bits: self.n_bits,
                gates: self.gates.len(),
            });
        }
        Instance::new(Arc::new(GateTable(self.gates)), self.k)
    }
}

/// Value of every gate, indexed by gate number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitValues(pub Vec<bool>);

impl CircuitValues {
    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_yes(&self, k: usize) -> bool {
        self.0[k]
    }
}

/// Evaluates every gate in index order.
pub fn evaluate(inst: &Instance) -> Result<CircuitValues, CircuitError> {
    let n = inst.gate_count();
    let mut values = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(2);
    for i in 0..n {
        let gate = inst.describe(i);
        gate.validate(i)?;
        scratch.clear();
        scratch.extend(gate.inputs.iter().map(|&j| values[j]));
        values.push(gate.kind.apply(&scratch));
    }
    Ok(CircuitValues(values))
}

/// Doubling-OR instance of height `h` with output gate `2h + 1`.
///
/// Every gate evaluates to 0, so this is always a no-instance.
pub fn tx_instance(h: usize) -> Result<Instance, CircuitError> {
    let oracle = TxOracle::new(h)?;
    Instance::new(Arc::new(oracle), 2 * h + 1)
}

/// Random acyclic instance with `2^n_bits` gates, deterministic in `seed`.
///
/// With probability `yes_bias` the output gate is drawn uniformly from the
/// gates evaluating to 1, otherwise from those evaluating to 0; when the
/// preferred side is empty it is drawn from all gates.
pub fn random_instance(seed: u64, n_bits: u32, yes_bias: f64) -> Instance {
    assert!((1..=5).contains(&n_bits), "n_bits must be in 1..=5");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1usize << n_bits;
    let mut gates = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if i == 0 {
            if rng.random_bool(0.5) {
                GateKind::One
            } else {
                GateKind::Zero
            }
        } else {
            GateKind::ALL[rng.random_range(0..GateKind::ALL.len())]
        };
        let inputs = (0..kind.arity()).map(|_| rng.random_range(0..i)).collect();
        gates.push(GateDescriptor { kind, inputs });
    }
    let values = {
        let mut v: Vec<bool> = Vec::with_capacity(n);
        for g in &gates {
            let ins: Vec<bool> = g.inputs.iter().map(|&j| v[j]).collect();
            v.push(g.kind.apply(&ins));
        }
        v
    };
    let want = rng.random_bool(yes_bias.clamp(0.0, 1.0));
    let candidates: Vec<usize> = (0..n).filter(|&i| values[i] == want).collect();
    let k = if candidates.is_empty() {
        rng.random_range(0..n)
    } else {
        candidates[rng.random_range(0..candidates.len())]
    };
    Instance::from_gates(gates, k).expect("generated gates are acyclic")
}
