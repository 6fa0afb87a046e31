//! Gray-labeled square QAM, the spatial distribution of coded bits over
//! streams, per-stream bit interleaving, and symbol packing. `Modem` owns the
//! full coded-bit-to-symbol-slot geometry of one frame, which the detector
//! and the analysis must agree on.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

// ---------------------------------------------------------------------------
// constellation
// ---------------------------------------------------------------------------

/// Unit-average-energy square QAM (or BPSK for 1 bit) with Gray labels.
///
/// `points[label]` is the symbol for that label. Bit 1 of a label is the most
/// significant; for even bit counts the first half of the bits selects the
/// in-phase level, the second half the quadrature level, each through a
/// binary-reflected Gray map.
#[derive(Debug, Clone)]
pub struct Constellation {
    bits: usize,
    points: Vec<Complex64>,
    d_min: f64,
    /// subsets[i-1][b] = labels whose i-th bit equals b.
    subsets: Vec<[Vec<usize>; 2]>,
}

fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

impl Constellation {
    pub fn qam(bits: usize) -> Result<Self> {
        if bits == 0 || bits > 8 || (bits > 1 && bits % 2 != 0) {
            return Err(Error::Config(format!(
                "unsupported constellation size: {bits} bits per symbol"
            )));
        }
        let size = 1usize << bits;
        let mut points = vec![Complex64::new(0.0, 0.0); size];
        let d_min;
        if bits == 1 {
            points[0] = Complex64::new(1.0, 0.0);
            points[1] = Complex64::new(-1.0, 0.0);
            d_min = 2.0;
        } else {
            let half = bits / 2;
            let side = 1usize << half;
            // Levels +-1, +-3, ... scaled to unit average energy.
            let energy = 2.0 * ((side * side - 1) as f64) / 3.0;
            let scale = 1.0 / energy.sqrt();
            for ix in 0..side {
                for iy in 0..side {
                    let label = (gray(ix) << half) | gray(iy);
                    let re = (2 * ix) as f64 - (side - 1) as f64;
                    let im = (2 * iy) as f64 - (side - 1) as f64;
                    points[label] = Complex64::new(re, im) * scale;
                }
            }
            d_min = 2.0 * scale;
        }
        let subsets = (0..bits)
            .map(|i| {
                let mut sets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
                for label in 0..size {
                    sets[(label >> (bits - 1 - i)) & 1].push(label);
                }
                sets
            })
            .collect();
        Ok(Self {
            bits,
            points,
            d_min,
            subsets,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    /// Labels whose `i`-th bit (1-based, MSB first) equals `b`.
    pub fn subset(&self, i: usize, b: u8) -> &[usize] {
        &self.subsets[i - 1][b as usize]
    }

    /// Bit `i` (1-based, MSB first) of `label`.
    pub fn label_bit(&self, label: usize, i: usize) -> u8 {
        ((label >> (self.bits - i)) & 1) as u8
    }

    /// Packs `bits` (must be a multiple of the symbol size) into labels,
    /// MSB first.
    pub fn labels_from_bits(&self, bits: &[u8]) -> Result<Vec<usize>> {
        if bits.len() % self.bits != 0 {
            return Err(Error::InvalidInput(format!(
                "{} bits do not tile {}-bit symbols",
                bits.len(),
                self.bits
            )));
        }
        Ok(bits
            .chunks(self.bits)
            .map(|chunk| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize))
            .collect())
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        Ok(self
            .labels_from_bits(bits)?
            .into_iter()
            .map(|l| self.points[l])
            .collect())
    }
}

// ---------------------------------------------------------------------------
// spatial interleaver
// ---------------------------------------------------------------------------

/// Periodic assignment of consecutive coded bits to spatial streams.
/// `pattern` holds 1-based stream indices; bit u goes to
/// `pattern[(u-1) % pattern.len()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialInterleaver {
    streams: usize,
    pattern: Vec<usize>,
}

impl SpatialInterleaver {
    /// Cycles through streams one bit at a time: 1, 2, ..., S, 1, ...
    pub fn rotating(streams: usize) -> Self {
        Self {
            streams,
            pattern: (1..=streams).collect(),
        }
    }

    /// Dwells `run_len` consecutive bits on each stream before moving on.
    pub fn block(streams: usize, run_len: usize) -> Self {
        let mut pattern = Vec::with_capacity(streams * run_len);
        for s in 1..=streams {
            pattern.extend(std::iter::repeat(s).take(run_len));
        }
        Self { streams, pattern }
    }

    pub fn explicit(streams: usize, pattern: Vec<usize>) -> Result<Self> {
        let il = Self { streams, pattern };
        il.validate()?;
        Ok(il)
    }

    pub fn validate(&self) -> Result<()> {
        if self.streams == 0 || self.pattern.is_empty() {
            return Err(Error::Config("empty spatial interleaver".into()));
        }
        if self.pattern.iter().any(|&s| s == 0 || s > self.streams) {
            return Err(Error::Config("spatial pattern names an unknown stream".into()));
        }
        for s in 1..=self.streams {
            if !self.pattern.contains(&s) {
                return Err(Error::Config(format!(
                    "stream {s} never appears in the spatial pattern"
                )));
            }
        }
        Ok(())
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn period(&self) -> usize {
        self.pattern.len()
    }

    /// Stream (1-based) of coded bit `u` (1-based).
    pub fn stream_of(&self, u: usize) -> usize {
        self.pattern[(u - 1) % self.pattern.len()]
    }

    /// Stream at pattern phase `phase` (0-based).
    pub fn stream_at_phase(&self, phase: usize) -> usize {
        self.pattern[phase % self.pattern.len()]
    }

    /// Splits a coded bit sequence into per-stream bit sequences.
    pub fn split(&self, coded: &[u8]) -> Vec<Vec<u8>> {
        let mut streams = vec![Vec::new(); self.streams];
        for (idx, &bit) in coded.iter().enumerate() {
            streams[self.stream_of(idx + 1) - 1].push(bit);
        }
        streams
    }
}

// ---------------------------------------------------------------------------
// frame geometry
// ---------------------------------------------------------------------------

/// Where one coded bit lands: time instant `k`, stream `s`, label bit `i`
/// (all 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitSlot {
    pub k: usize,
    pub s: usize,
    pub i: usize,
}

/// Frame-level mapping from coded bits to symbol slots: spatial distribution,
/// optional seeded per-stream bit interleaving, and packing of consecutive
/// interleaved bits into the label positions of successive symbols.
#[derive(Debug, Clone)]
pub struct Modem {
    constellation: Constellation,
    spatial: SpatialInterleaver,
    coded_len: usize,
    /// Per-stream padded bit count (equal across streams, multiple of m).
    stream_bits: usize,
    padded: bool,
    /// slots[u-1] = symbol slot of coded bit u.
    slots: Vec<BitSlot>,
}

impl Modem {
    /// `bit_seed = None` keeps the per-stream interleavers at identity.
    pub fn new(
        constellation: Constellation,
        spatial: SpatialInterleaver,
        bit_seed: Option<u64>,
        coded_len: usize,
    ) -> Result<Self> {
        spatial.validate()?;
        if coded_len == 0 {
            return Err(Error::InvalidInput("empty frame".into()));
        }
        let s_count = spatial.streams();
        let m = constellation.bits();

        let mut per_stream = vec![0usize; s_count];
        for u in 1..=coded_len {
            per_stream[spatial.stream_of(u) - 1] += 1;
        }
        let raw_max = *per_stream.iter().max().unwrap();
        let stream_bits = raw_max.div_ceil(m) * m;
        let padded = per_stream.iter().any(|&c| c != stream_bits);

        // permutations[s-1][j-1] = interleaved position (1-based) of the
        // j-th bit on stream s.
        let permutations: Vec<Vec<usize>> = (0..s_count)
            .map(|s| match bit_seed {
                None => (1..=stream_bits).collect(),
                Some(seed) => {
                    let mut rng = RngStream::new(seed, s as u64);
                    let mut perm: Vec<usize> = (1..=stream_bits).collect();
                    // Fisher-Yates.
                    for j in (1..stream_bits).rev() {
                        let r = rng.gen_range(0..=j);
                        perm.swap(j, r);
                    }
                    perm
                }
            })
            .collect();

        let mut next_on_stream = vec![0usize; s_count];
        let mut slots = Vec::with_capacity(coded_len);
        for u in 1..=coded_len {
            let s = spatial.stream_of(u);
            next_on_stream[s - 1] += 1;
            let j = next_on_stream[s - 1];
            let jp = permutations[s - 1][j - 1];
            slots.push(BitSlot {
                k: (jp - 1) / m + 1,
                s,
                i: (jp - 1) % m + 1,
            });
        }

        Ok(Self {
            constellation,
            spatial,
            coded_len,
            stream_bits,
            padded,
            slots,
        })
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn spatial(&self) -> &SpatialInterleaver {
        &self.spatial
    }

    pub fn coded_len(&self) -> usize {
        self.coded_len
    }

    /// Time instants per frame.
    pub fn instants(&self) -> usize {
        self.stream_bits / self.constellation.bits()
    }

    /// True when stream lengths needed zero padding to tile symbols.
    pub fn padded(&self) -> bool {
        self.padded
    }

    /// Symbol slot of coded bit `u` (1-based).
    pub fn locate(&self, u: usize) -> Result<BitSlot> {
        self.slots
            .get(u - 1)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("coded bit {u} outside frame")))
    }

    /// Coded bit index occupying a slot, if any (padding slots are empty).
    pub fn invert(&self, slot: BitSlot) -> Option<usize> {
        // Small frames only appear in tests; the simulator iterates forward.
        self.slots.iter().position(|&x| x == slot).map(|p| p + 1)
    }

    /// Maps a coded frame to per-instant stream symbols:
    /// result[k-1][s-1] = symbol of stream s at instant k.
    pub fn map_frame(&self, coded: &[u8]) -> Result<Vec<Vec<Complex64>>> {
        if coded.len() != self.coded_len {
            return Err(Error::InvalidInput(format!(
                "frame has {} bits, expected {}",
                coded.len(),
                self.coded_len
            )));
        }
        let m = self.constellation.bits();
        let s_count = self.spatial.streams();
        // Interleaved per-stream bit arrays, zero-padded.
        let mut stream_bits = vec![vec![0u8; self.stream_bits]; s_count];
        for (idx, &bit) in coded.iter().enumerate() {
            let s = self.spatial.stream_of(idx + 1);
            let slot = self.slots[idx];
            let jp = (slot.k - 1) * m + slot.i;
            stream_bits[s - 1][jp - 1] = bit;
        }
        let instants = self.instants();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); s_count]; instants];
        for s in 0..s_count {
            let labels = self.constellation.labels_from_bits(&stream_bits[s])?;
            for (k, &label) in labels.iter().enumerate() {
                out[k][s] = self.constellation.point(label);
            }
        }
        Ok(out)
    }

    /// Do the given coded bits (1-based indices) land in pairwise distinct
    /// symbol slots (distinct time/stream pairs)?
    pub fn distinct_symbols(&self, coded_positions: &[usize]) -> Result<bool> {
        let mut seen = std::collections::HashSet::new();
        for &u in coded_positions {
            let slot = self.locate(u)?;
            if !seen.insert((slot.k, slot.s)) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qpsk_geometry() {
        let c = Constellation::qam(2).unwrap();
        assert_eq!(c.size(), 4);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for label in 0..4 {
            let p = c.point(label);
            assert!((p.re.abs() - r).abs() < 1e-12);
            assert!((p.im.abs() - r).abs() < 1e-12);
        }
        assert!((c.d_min() - std::f64::consts::SQRT_2).abs() < 1e-12);
        // Unit average energy.
        let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 4.0;
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qam16_matches_axis_wise_gray_oracle() {
        let c = Constellation::qam(4).unwrap();
        assert!((c.d_min() - 2.0 / 10.0f64.sqrt()).abs() < 1e-12);
        let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-12);

        // Independent construction: 2-bit binary-reflected Gray per axis,
        // labels (i-bits, q-bits), levels ascending -3,-1,1,3 over the Gray
        // sequence 00,01,11,10.
        let gray_seq = [0b00usize, 0b01, 0b11, 0b10];
        let scale = 1.0 / 10.0f64.sqrt();
        for (ix, &gi) in gray_seq.iter().enumerate() {
            for (iy, &gq) in gray_seq.iter().enumerate() {
                let label = (gi << 2) | gq;
                let expect = Complex64::new(
                    (2.0 * ix as f64 - 3.0) * scale,
                    (2.0 * iy as f64 - 3.0) * scale,
                );
                assert!(
                    (c.point(label) - expect).norm() < 1e-12,
                    "label {label:04b}"
                );
            }
        }
    }

    #[test]
    fn gray_property_nearest_neighbors_differ_in_one_bit() {
        for bits in [2usize, 4, 6] {
            let c = Constellation::qam(bits).unwrap();
            for a in 0..c.size() {
                for b in 0..c.size() {
                    if a == b {
                        continue;
                    }
                    let d = (c.point(a) - c.point(b)).norm();
                    if d < c.d_min() * 1.001 {
                        assert_eq!(
                            (a ^ b).count_ones(),
                            1,
                            "labels {a:b} and {b:b} are neighbors"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn bpsk_and_bad_sizes() {
        let c = Constellation::qam(1).unwrap();
        assert!((c.d_min() - 2.0).abs() < 1e-12);
        assert!(Constellation::qam(3).is_err());
        assert!(Constellation::qam(0).is_err());
    }

    #[test]
    fn subsets_partition_labels() {
        let c = Constellation::qam(4).unwrap();
        for i in 1..=4 {
            let s0 = c.subset(i, 0);
            let s1 = c.subset(i, 1);
            assert_eq!(s0.len(), 8);
            assert_eq!(s1.len(), 8);
            for &l in s0 {
                assert_eq!(c.label_bit(l, i), 0);
            }
            for &l in s1 {
                assert_eq!(c.label_bit(l, i), 1);
            }
        }
    }

    #[test]
    fn spatial_patterns() {
        let rot = SpatialInterleaver::rotating(3);
        assert_eq!(
            (1..=7).map(|u| rot.stream_of(u)).collect::<Vec<_>>(),
            vec![1, 2, 3, 1, 2, 3, 1]
        );
        let blk = SpatialInterleaver::block(3, 6);
        assert_eq!(blk.period(), 18);
        assert_eq!(blk.stream_of(6), 1);
        assert_eq!(blk.stream_of(7), 2);
        assert_eq!(blk.stream_of(19), 1);
        assert!(SpatialInterleaver::explicit(3, vec![1, 2]).is_err());
        assert!(SpatialInterleaver::explicit(2, vec![1, 2, 3]).is_err());
    }

    #[test]
    fn locate_with_identity_interleaver() {
        // Rotating pattern, 4-QAM: bits 1 and 4 fill the two label positions
        // of stream 1's first symbol.
        let modem = Modem::new(
            Constellation::qam(2).unwrap(),
            SpatialInterleaver::rotating(3),
            None,
            12,
        )
        .unwrap();
        assert_eq!(modem.locate(1).unwrap(), BitSlot { k: 1, s: 1, i: 1 });
        assert_eq!(modem.locate(2).unwrap(), BitSlot { k: 1, s: 2, i: 1 });
        assert_eq!(modem.locate(4).unwrap(), BitSlot { k: 1, s: 1, i: 2 });
        assert_eq!(modem.locate(7).unwrap(), BitSlot { k: 2, s: 1, i: 1 });
        assert!(!modem.padded());
        assert_eq!(modem.instants(), 2);
    }

    #[test]
    fn uneven_streams_get_padded() {
        // 7 bits over 3 streams: stream 1 gets 3 bits, others 2.
        let modem = Modem::new(
            Constellation::qam(2).unwrap(),
            SpatialInterleaver::rotating(3),
            None,
            7,
        )
        .unwrap();
        assert!(modem.padded());
        assert_eq!(modem.instants(), 2);
        let frame = modem.map_frame(&[1, 1, 1, 1, 1, 1, 1]).unwrap();
        assert_eq!(frame.len(), 2);
        // Stream 1's second symbol carries one real bit and one padding zero;
        // stream 2's second symbol is entirely padding.
        let c = modem.constellation();
        let mixed = c.labels_from_bits(&[1, 0]).unwrap()[0];
        assert_eq!(frame[1][0], c.point(mixed));
        assert_eq!(frame[1][1], c.point(0));
    }

    #[test]
    fn map_frame_agrees_with_locate() {
        let modem = Modem::new(
            Constellation::qam(2).unwrap(),
            SpatialInterleaver::block(3, 6),
            Some(99),
            36,
        )
        .unwrap();
        let coded: Vec<u8> = (0..36).map(|i| ((i * 7 + 3) % 2) as u8).collect();
        let frame = modem.map_frame(&coded).unwrap();
        // Rebuild each symbol's label from locate() and compare.
        let m = modem.constellation().bits();
        let mut labels = vec![vec![0usize; 3]; modem.instants()];
        for (idx, &bit) in coded.iter().enumerate() {
            let slot = modem.locate(idx + 1).unwrap();
            labels[slot.k - 1][slot.s - 1] |= (bit as usize) << (m - slot.i);
        }
        for k in 0..modem.instants() {
            for s in 0..3 {
                assert_eq!(
                    frame[k][s],
                    modem.constellation().point(labels[k][s]),
                    "instant {k} stream {s}"
                );
            }
        }
    }

    #[test]
    fn distinct_symbol_audit() {
        let modem = Modem::new(
            Constellation::qam(2).unwrap(),
            SpatialInterleaver::block(3, 6),
            None,
            36,
        )
        .unwrap();
        // Identity interleaving: bits 1 and 4 share stream 1 but symbols 1, 2.
        assert!(modem.distinct_symbols(&[1, 4]).unwrap());
        // Bits 1 and 2 are consecutive on stream 1: same symbol.
        assert!(!modem.distinct_symbols(&[1, 2]).unwrap());
    }

    proptest! {
        #[test]
        fn locate_is_injective(seed in proptest::option::of(0u64..1000),
                               coded_len in 1usize..200) {
            let modem = Modem::new(
                Constellation::qam(2).unwrap(),
                SpatialInterleaver::rotating(3),
                seed,
                coded_len,
            ).unwrap();
            let mut seen = std::collections::HashSet::new();
            for u in 1..=coded_len {
                let slot = modem.locate(u).unwrap();
                prop_assert!(seen.insert(slot), "slot collision at bit {}", u);
                prop_assert_eq!(modem.invert(slot), Some(u));
            }
        }
    }
}
