//! TOML configuration schema and its translation into runtime objects. A
//! file describes one system (antennas, code, modulation, interleaving,
//! precoder, sweep) plus optional variants that override the interleaver or
//! precoder, which is how the comparison curves of one experiment share a
//! base setup.

use std::path::Path;

use serde::Deserialize;

use crate::coding::{CodeSpec, PunctureMatrix};
use crate::error::{Error, Result};
use crate::modem::{Constellation, SpatialInterleaver};
use crate::precoding::{default_angles, make_rotation, tune_rotation, PrecoderConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: SystemSection,
    pub code: CodeSection,
    pub modulation: ModulationSection,
    pub interleaver: InterleaverSection,
    #[serde(default)]
    pub precoder: PrecoderSection,
    pub simulation: SimulationSection,
    #[serde(default, rename = "variant")]
    pub variants: Vec<VariantSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub tx: usize,
    pub rx: usize,
    pub streams: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    /// Comma-separated octal generators, e.g. "5,7" or "133,171".
    pub generators: String,
    /// Puncture pattern rows as 0/1 strings, one per output line.
    #[serde(default)]
    pub puncture: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSection {
    /// Bits per symbol: 1, 2, 4 or 6.
    pub bits: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterleaverSection {
    pub spatial: SpatialSpec,
    /// Seed for the per-stream bit interleavers; absent keeps them identity.
    #[serde(default)]
    pub bit_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpatialSpec {
    /// "rotating": one bit per stream in turn.
    Named(String),
    /// { block = 6 }: dwell that many bits per stream.
    Block { block: usize },
    /// Explicit periodic pattern of 1-based stream indices.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecoderSection {
    /// Precoded subchannels, strictly increasing. Empty disables precoding.
    #[serde(default)]
    pub bp: Vec<usize>,
    /// Redundant size check; must equal bp's length when given.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub angles: Option<AngleSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    /// "default" for the tuned constants, "auto" for a fresh grid search.
    Named(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub snr_db: Vec<f64>,
    #[serde(default = "default_min_bit_errors")]
    pub min_bit_errors: u64,
    #[serde(default = "default_max_bits")]
    pub max_bits: u64,
    /// Time instants per channel realization.
    #[serde(default = "default_k_block")]
    pub k_block: usize,
    #[serde(default = "default_frame_info_bits")]
    pub frame_info_bits: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_min_bit_errors() -> u64 {
    200
}

fn default_max_bits() -> u64 {
    20_000_000
}

fn default_k_block() -> usize {
    100
}

fn default_frame_info_bits() -> usize {
    1800
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    pub label: String,
    #[serde(default)]
    pub interleaver: Option<InterleaverSection>,
    #[serde(default)]
    pub precoder: Option<PrecoderSection>,
    /// Sweep grid override; curves with different slopes need different
    /// ranges to stay above the error-count floor.
    #[serde(default)]
    pub snr_db: Option<Vec<f64>>,
    /// SNR window (dB, inclusive) for the slope fit in the summary.
    #[serde(default)]
    pub slope_window_db: Option<[f64; 2]>,
}

/// Everything one simulation sweep needs, fully validated.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub code: CodeSpec,
    pub constellation: Constellation,
    pub spatial: SpatialInterleaver,
    pub bit_seed: Option<u64>,
    pub precoder: PrecoderConfig,
    pub snr_db: Vec<f64>,
    pub min_bit_errors: u64,
    pub max_bits: u64,
    pub k_block: usize,
    pub frame_info_bits: usize,
    pub seed: u64,
}

/// One labeled curve of an experiment.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub sim: SimConfig,
    pub slope_window_db: Option<(f64, f64)>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn build_code(&self) -> Result<CodeSpec> {
        let puncture = match &self.code.puncture {
            None => None,
            Some(rows) => {
                let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
                Some(PunctureMatrix::from_rows(&refs)?)
            }
        };
        CodeSpec::from_octal(&self.code.generators, puncture)
    }

    fn build_spatial(&self, section: &InterleaverSection) -> Result<SpatialInterleaver> {
        let s = self.system.streams;
        match &section.spatial {
            SpatialSpec::Named(name) if name == "rotating" => {
                Ok(SpatialInterleaver::rotating(s))
            }
            SpatialSpec::Named(name) => Err(Error::Config(format!(
                "unknown spatial interleaver {name:?}; use \"rotating\", \
                 {{ block = <run> }}, or an explicit pattern"
            ))),
            SpatialSpec::Block { block } => {
                if *block == 0 {
                    return Err(Error::Config("block run length must be positive".into()));
                }
                Ok(SpatialInterleaver::block(s, *block))
            }
            SpatialSpec::Explicit(pattern) => SpatialInterleaver::explicit(s, pattern.clone()),
        }
    }

    fn build_precoder(
        &self,
        section: &PrecoderSection,
        constellation: &Constellation,
    ) -> Result<PrecoderConfig> {
        let s = self.system.streams;
        if let Some(p) = section.p {
            if p != section.bp.len() {
                return Err(Error::Config(format!(
                    "p = {p} but bp lists {} subchannels",
                    section.bp.len()
                )));
            }
        }
        if section.bp.is_empty() {
            if section.angles.is_some() {
                return Err(Error::Config(
                    "rotation angles given but no subchannel is precoded".into(),
                ));
            }
            return PrecoderConfig::none(s);
        }
        let p = section.bp.len();
        let theta = match &section.angles {
            None => make_rotation(p, &default_angles(p)?)?,
            Some(AngleSpec::Named(name)) if name == "default" => {
                make_rotation(p, &default_angles(p)?)?
            }
            Some(AngleSpec::Named(name)) if name == "auto" => {
                let steps = match p {
                    2 => 64,
                    3 => 12,
                    _ => 6,
                };
                let (angles, _) = tune_rotation(p, constellation, steps)?;
                make_rotation(p, &angles)?
            }
            Some(AngleSpec::Named(name)) => Err(Error::Config(format!(
                "unknown angle preset {name:?}; use \"default\", \"auto\", or a list"
            )))?,
            Some(AngleSpec::List(angles)) => make_rotation(p, angles)?,
        };
        if p == s {
            PrecoderConfig::full(s, theta)
        } else {
            PrecoderConfig::partial(s, theta, section.bp.clone())
        }
    }

    fn build_sim(
        &self,
        interleaver: &InterleaverSection,
        precoder: &PrecoderSection,
    ) -> Result<SimConfig> {
        let (n, m, s) = (self.system.tx, self.system.rx, self.system.streams);
        if s == 0 || s > n.min(m) {
            return Err(Error::Config(format!(
                "{s} streams do not fit {n} tx by {m} rx antennas"
            )));
        }
        let sim = &self.simulation;
        if sim.snr_db.is_empty() {
            return Err(Error::Config("empty SNR list".into()));
        }
        if sim.min_bit_errors == 0 || sim.max_bits == 0 {
            return Err(Error::Config("stop rule must be positive".into()));
        }
        if sim.k_block == 0 || sim.frame_info_bits == 0 {
            return Err(Error::Config(
                "block length and frame size must be positive".into(),
            ));
        }
        let constellation = Constellation::qam(self.modulation.bits)?;
        Ok(SimConfig {
            n,
            m,
            s,
            code: self.build_code()?,
            spatial: self.build_spatial(interleaver)?,
            bit_seed: interleaver.bit_seed,
            precoder: self.build_precoder(precoder, &constellation)?,
            constellation,
            snr_db: sim.snr_db.clone(),
            min_bit_errors: sim.min_bit_errors,
            max_bits: sim.max_bits,
            k_block: sim.k_block,
            frame_info_bits: sim.frame_info_bits,
            seed: sim.seed,
        })
    }

    /// The experiment's curves: the base sections as variant "base" when no
    /// variants are declared, otherwise one curve per `[[variant]]`.
    pub fn build(&self) -> Result<Vec<Variant>> {
        if self.variants.is_empty() {
            return Ok(vec![Variant {
                label: "base".into(),
                sim: self.build_sim(&self.interleaver, &self.precoder)?,
                slope_window_db: None,
            }]);
        }
        let mut seen = std::collections::HashSet::new();
        self.variants
            .iter()
            .map(|v| {
                if v.label.is_empty() || !seen.insert(v.label.clone()) {
                    return Err(Error::Config(format!(
                        "variant labels must be unique and nonempty; got {:?}",
                        v.label
                    )));
                }
                if v.label.contains(std::path::is_separator) {
                    return Err(Error::Config(format!(
                        "variant label {:?} cannot name a file",
                        v.label
                    )));
                }
                let il = v.interleaver.as_ref().unwrap_or(&self.interleaver);
                let pc = v.precoder.as_ref().unwrap_or(&self.precoder);
                let mut sim = self.build_sim(il, pc)?;
                if let Some(snr) = &v.snr_db {
                    if snr.is_empty() {
                        return Err(Error::Config(format!(
                            "variant {:?} has an empty SNR list",
                            v.label
                        )));
                    }
                    sim.snr_db = snr.clone();
                }
                Ok(Variant {
                    label: v.label.clone(),
                    sim,
                    slope_window_db: v.slope_window_db.map(|[a, b]| (a, b)),
                })
            })
            .collect()
    }
}
