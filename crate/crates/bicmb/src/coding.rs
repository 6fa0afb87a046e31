//! Binary convolutional codes: encoding with zero-tail termination, optional
//! puncturing, soft-metric Viterbi decoding, and free-distance search.

use crate::error::{Error, Result};

/// Puncturing matrix. Rows follow the emitted-bit order within a trellis
/// step, columns cycle over steps; a 0 deletes the corresponding output bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PunctureMatrix {
    rows: Vec<Vec<u8>>,
}

impl PunctureMatrix {
    /// Rows given as strings of '0'/'1', e.g. `["110", "101"]`.
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let parsed: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| {
                r.chars()
                    .map(|c| match c {
                        '0' => Ok(0u8),
                        '1' => Ok(1u8),
                        _ => Err(Error::Config(format!("bad puncture row {r:?}"))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        if parsed.is_empty() || parsed[0].is_empty() {
            return Err(Error::Config("empty puncture matrix".into()));
        }
        let period = parsed[0].len();
        if parsed.iter().any(|r| r.len() != period) {
            return Err(Error::Config("puncture rows differ in length".into()));
        }
        for col in 0..period {
            if parsed.iter().all(|r| r[col] == 0) {
                return Err(Error::Config(format!(
                    "puncture column {col} deletes every output bit"
                )));
            }
        }
        Ok(Self { rows: parsed })
    }

    pub fn period(&self) -> usize {
        self.rows[0].len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Keep the bit emitted at row `row` during step phase `phase`?
    pub fn keeps(&self, row: usize, phase: usize) -> bool {
        self.rows[row][phase % self.period()] == 1
    }

    /// Surviving bits per full period.
    pub fn survivors_per_period(&self) -> usize {
        self.rows.iter().flatten().filter(|&&b| b == 1).count()
    }
}

/// Rate-1/n convolutional code given by octal generator polynomials, with
/// optional puncturing to higher rates.
#[derive(Debug, Clone)]
pub struct CodeSpec {
    generators: Vec<u32>,
    constraint_length: usize,
    puncture: Option<PunctureMatrix>,
}

impl CodeSpec {
    /// Generators as a comma-separated octal string, e.g. `"133,171"`.
    pub fn from_octal(generators: &str, puncture: Option<PunctureMatrix>) -> Result<Self> {
        let gens: Vec<u32> = generators
            .split(',')
            .map(|g| {
                u32::from_str_radix(g.trim(), 8)
                    .map_err(|_| Error::Config(format!("bad octal generator {g:?}")))
            })
            .collect::<Result<_>>()?;
        Self::new(gens, puncture)
    }

    pub fn new(generators: Vec<u32>, puncture: Option<PunctureMatrix>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Config("no generator polynomials".into()));
        }
        if generators.iter().any(|&g| g == 0) {
            return Err(Error::Config("zero generator polynomial".into()));
        }
        let constraint_length = generators
            .iter()
            .map(|g| 32 - g.leading_zeros() as usize)
            .max()
            .unwrap();
        if constraint_length > 16 {
            return Err(Error::Config(format!(
                "constraint length {constraint_length} unsupported"
            )));
        }
        if let Some(p) = &puncture {
            if p.n_rows() != generators.len() {
                return Err(Error::Config(format!(
                    "puncture matrix has {} rows for {} generator outputs",
                    p.n_rows(),
                    generators.len()
                )));
            }
        }
        Ok(Self {
            generators,
            constraint_length,
            puncture,
        })
    }

    pub fn generators(&self) -> &[u32] {
        &self.generators
    }

    pub fn constraint_length(&self) -> usize {
        self.constraint_length
    }

    /// Shift-register memory (tail length).
    pub fn memory(&self) -> usize {
        self.constraint_length - 1
    }

    pub fn n_outputs(&self) -> usize {
        self.generators.len()
    }

    pub fn puncture_ref(&self) -> Option<&PunctureMatrix> {
        self.puncture.as_ref()
    }

    /// Code rate after puncturing, as a fraction of info bits per coded bit
    /// (tail overhead excluded).
    pub fn rate(&self) -> f64 {
        match &self.puncture {
            None => 1.0 / self.n_outputs() as f64,
            Some(p) => p.period() as f64 / p.survivors_per_period() as f64,
        }
    }

    /// Mother-code output bits per info bit.
    fn mother_bits_per_step(&self) -> usize {
        self.n_outputs()
    }

    /// One trellis step: feed `bit` into state `state`, returning the new
    /// state and the output bits in emission order.
    ///
    /// The register value puts the current input in the most significant
    /// position, matching the usual octal tap notation. Outputs are emitted
    /// last listed generator first: the textbook trellis for "5,7" puts the
    /// all-taps branch on the first output line, and the stream weights of
    /// the interleaved system depend on this order.
    pub fn step(&self, state: u32, bit: u8, out: &mut Vec<u8>) -> u32 {
        let nu = self.memory() as u32;
        let reg = ((bit as u32) << nu) | state;
        for g in self.generators.iter().rev() {
            out.push(((reg & g).count_ones() & 1) as u8);
        }
        reg >> 1
    }

    /// Number of punctured-codeword bits produced by `info_len` info bits
    /// (tail included).
    pub fn coded_len(&self, info_len: usize) -> usize {
        let steps = info_len + self.memory();
        match &self.puncture {
            None => steps * self.mother_bits_per_step(),
            Some(p) => {
                let n = self.n_outputs();
                let mut kept = 0;
                for t in 0..steps {
                    for j in 0..n {
                        if p.keeps(j, t) {
                            kept += 1;
                        }
                    }
                }
                kept
            }
        }
    }
}

/// Encodes `info` with zero-tail termination and applies the puncturing
/// pattern. Output bits appear step by step in emission order.
pub fn encode(spec: &CodeSpec, info: &[u8]) -> Result<Vec<u8>> {
    if info.iter().any(|&b| b > 1) {
        return Err(Error::InvalidInput("info bits must be 0 or 1".into()));
    }
    let nu = spec.memory();
    let n = spec.n_outputs();
    let mut state = 0u32;
    let mut mother = Vec::with_capacity((info.len() + nu) * n);
    for &b in info.iter().chain(std::iter::repeat(&0u8).take(nu)) {
        state = spec.step(state, b, &mut mother);
    }
    debug_assert_eq!(state, 0, "zero tail must terminate the trellis");
    match spec.puncture_ref() {
        None => Ok(mother),
        Some(p) => {
            let mut out = Vec::with_capacity(mother.len());
            for (idx, &bit) in mother.iter().enumerate() {
                let (t, j) = (idx / n, idx % n);
                if p.keeps(j, t) {
                    out.push(bit);
                }
            }
            Ok(out)
        }
    }
}

/// Per-position metric pairs `(cost of 0, cost of 1)` aligned to mother-code
/// bit positions; `None` marks punctured positions.
#[derive(Debug, Clone)]
pub struct BitMetricTable {
    pub entries: Vec<Option<(f64, f64)>>,
}

impl BitMetricTable {
    /// Expands a punctured metric sequence back onto mother positions.
    pub fn from_punctured(spec: &CodeSpec, metrics: Vec<(f64, f64)>) -> Result<Self> {
        let n = spec.n_outputs();
        match spec.puncture_ref() {
            None => Ok(Self {
                entries: metrics.into_iter().map(Some).collect(),
            }),
            Some(p) => {
                let mut it = metrics.into_iter().peekable();
                let mut entries = Vec::new();
                let mut t = 0;
                while it.peek().is_some() {
                    for j in 0..n {
                        if p.keeps(j, t) {
                            match it.next() {
                                Some(m) => entries.push(Some(m)),
                                None => {
                                    return Err(Error::Contract(
                                        "metric count does not fill a whole trellis step".into(),
                                    ))
                                }
                            }
                        } else {
                            entries.push(None);
                        }
                    }
                    t += 1;
                }
                Ok(Self { entries })
            }
        }
    }
}

/// Viterbi decoding over summed bit metrics. The trellis starts and ends in
/// the zero state (zero-tail termination); metric ties pick the predecessor
/// with the smaller state index. Returns the info bits without the tail.
pub fn viterbi_decode(spec: &CodeSpec, table: &BitMetricTable) -> Result<Vec<u8>> {
    let n = spec.n_outputs();
    if table.entries.len() % n != 0 {
        return Err(Error::Contract(format!(
            "metric table length {} is not a whole number of steps",
            table.entries.len()
        )));
    }
    let steps = table.entries.len() / n;
    let nu = spec.memory();
    if steps < nu {
        return Err(Error::InvalidInput("metric table shorter than the tail".into()));
    }

    if nu == 0 {
        // Single-state code: each step decodes independently.
        let mut bits = Vec::with_capacity(steps);
        let mut scratch = Vec::with_capacity(n);
        for t in 0..steps {
            let base = t * n;
            let mut best = (f64::INFINITY, 0u8);
            for input in 0..2u8 {
                scratch.clear();
                spec.step(0, input, &mut scratch);
                let mut cost = 0.0;
                for (j, &bit) in scratch.iter().enumerate() {
                    if let Some((g0, g1)) = table.entries[base + j] {
                        cost += if bit == 0 { g0 } else { g1 };
                    }
                }
                if cost < best.0 {
                    best = (cost, input);
                }
            }
            bits.push(best.1);
        }
        return Ok(bits);
    }

    let n_states = 1usize << nu;
    let mask = (n_states - 1) as u32;

    let mut pm = vec![f64::INFINITY; n_states];
    pm[0] = 0.0;
    let mut next_pm = vec![0.0f64; n_states];
    // decisions[t][s'] = lsb of the chosen predecessor of s' at step t.
    let mut decisions = vec![vec![0u8; n_states]; steps];

    let mut out = Vec::with_capacity(n);
    for t in 0..steps {
        let base = t * n;
        for sp in 0..n_states {
            let input = (sp >> (nu - 1)) as u8;
            let p0 = ((sp << 1) as u32 & mask) as usize;
            let p1 = p0 | 1;
            let mut best = f64::INFINITY;
            let mut choice = 0u8;
            // p0 < p1, so evaluating p0 first with a strict improvement test
            // breaks ties toward the smaller predecessor index.
            for (which, p) in [(0u8, p0), (1u8, p1)] {
                if pm[p].is_infinite() {
                    continue;
                }
                out.clear();
                spec.step(p as u32, input, &mut out);
                let mut cost = pm[p];
                for (j, &bit) in out.iter().enumerate() {
                    if let Some((g0, g1)) = table.entries[base + j] {
                        cost += if bit == 0 { g0 } else { g1 };
                    }
                }
                if cost < best {
                    best = cost;
                    choice = which;
                }
            }
            next_pm[sp] = best;
            decisions[t][sp] = choice;
        }
        std::mem::swap(&mut pm, &mut next_pm);
    }

    // Trace back from the zero state.
    let mut state = 0usize;
    let mut bits = vec![0u8; steps];
    for t in (0..steps).rev() {
        bits[t] = (state >> (nu - 1)) as u8;
        let pred = ((state << 1) as u32 & mask) as usize | decisions[t][state] as usize;
        state = pred;
    }
    if state != 0 {
        return Err(Error::Contract("traceback did not reach the zero state".into()));
    }
    bits.truncate(steps - nu);
    Ok(bits)
}

/// Free distance of the unpunctured code: minimum output weight over all
/// trellis paths that leave the zero state and merge back, via shortest-path
/// search (edge weight = branch output weight).
pub fn free_distance(spec: &CodeSpec) -> Result<u32> {
    let nu = spec.memory();
    if nu == 0 {
        // Single-state code: one divergent branch.
        let mut out = Vec::new();
        spec.step(0, 1, &mut out);
        return Ok(out.iter().map(|&b| b as u32).sum());
    }
    let n_states = 1usize << nu;

    // Dijkstra from the post-divergence state, with the zero state as the
    // merge target. Edge weight = branch output weight.
    let mut dist = vec![u32::MAX; n_states];
    let mut out = Vec::new();
    let start = spec.step(0, 1, &mut out) as usize;
    let w0: u32 = out.iter().map(|&b| b as u32).sum();
    dist[start] = w0;

    let mut best_merge = u32::MAX;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(std::cmp::Reverse((w0, start)));
    while let Some(std::cmp::Reverse((d, s))) = heap.pop() {
        if d > dist[s] {
            continue;
        }
        if d >= best_merge {
            break; // every remaining path is at least as heavy
        }
        for input in 0..2u8 {
            out.clear();
            let ns = spec.step(s as u32, input, &mut out) as usize;
            let w: u32 = out.iter().map(|&b| b as u32).sum();
            if ns == 0 {
                best_merge = best_merge.min(d + w);
            } else if dist[ns] > d + w {
                dist[ns] = d + w;
                heap.push(std::cmp::Reverse((d + w, ns)));
            }
        }
    }
    if best_merge == u32::MAX {
        return Err(Error::BoundExceeded("no remerging path found".into()));
    }
    Ok(best_merge)
}
