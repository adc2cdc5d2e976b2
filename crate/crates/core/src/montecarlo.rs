//! Pulse-by-pulse stochastic simulation of the full experiment: heralded
//! sources, the PDC crystal, photon routing into a threshold-detector
//! array, and detector dead time.
//!
//! Pulses are simulated in fixed-size chunks. Each chunk owns an
//! independent RNG stream keyed by `(seed, chunk index)` and starts with
//! all detectors live, so results are identical for any number of worker
//! threads; the chunk size is part of the record's identity.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::detector::{CoincidenceStats, DetectorArray};
use crate::dist::{dist_given_input, PhotonNumberDist};
use crate::error::{Error, Result};
use crate::fock::SqueezeParams;
use crate::model::{ExperimentModel, SourceArm};

/// Default pulses per chunk.
pub const DEFAULT_CHUNK: u32 = 1 << 16;

/// Simulated click record: one K-bit detector mask per pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickRecord {
    k: u8,
    pulses: u64,
    /// One byte per pulse in memory; bit i = detector i clicked.
    masks: Vec<u8>,
    /// Seed the record was generated from (zero when read from a file).
    pub rng_seed: u64,
    /// Chunk size the record was generated with (zero when read from a file).
    pub chunk_size: u32,
}

impl ClickRecord {
    pub fn detectors(&self) -> u8 {
        self.k
    }

    pub fn pulses(&self) -> u64 {
        self.pulses
    }

    pub fn masks(&self) -> &[u8] {
        &self.masks
    }

    /// Per-detector singles rates (clicks per pulse).
    pub fn singles_rates(&self) -> Vec<f64> {
        let mut counts = vec![0u64; self.k as usize];
        for &m in &self.masks {
            for (i, c) in counts.iter_mut().enumerate() {
                if m & (1 << i) != 0 {
                    *c += 1;
                }
            }
        }
        counts
            .iter()
            .map(|&c| c as f64 / self.pulses as f64)
            .collect()
    }

    /// Serialize to the framed binary stream.
    ///
    /// Layout: magic `CJMC`, version u16 LE, K u8, reserved u8, pulse count
    /// u64 LE (16 bytes total), then K bits per pulse packed little-endian
    /// (bit `t*K + i` of the payload = detector i at pulse t), zero-padded
    /// to a byte boundary.
    pub fn to_bytes(&self) -> Vec<u8> {
        let total_bits = self.pulses as usize * self.k as usize;
        let mut out = Vec::with_capacity(16 + total_bits.div_ceil(8));
        out.extend_from_slice(b"CJMC");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.push(self.k);
        out.push(0);
        out.extend_from_slice(&self.pulses.to_le_bytes());
        out.resize(16 + total_bits.div_ceil(8), 0);
        for (t, &mask) in self.masks.iter().enumerate() {
            for i in 0..self.k as usize {
                if mask & (1 << i) != 0 {
                    let bit = t * self.k as usize + i;
                    out[16 + bit / 8] |= 1 << (bit % 8);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != b"CJMC" {
            return Err(Error::Format("missing CJMC header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != 1 {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let k = bytes[6];
        if k == 0 || k > 8 {
            return Err(Error::Format(format!("detector count {k} outside 1..=8")));
        }
        let pulses = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let total_bits = pulses as usize * k as usize;
        let need = 16 + total_bits.div_ceil(8);
        if bytes.len() < need {
            return Err(Error::Format(format!(
                "payload truncated: need {need} bytes, have {}",
                bytes.len()
            )));
        }
        let mut masks = vec![0u8; pulses as usize];
        for (t, mask) in masks.iter_mut().enumerate() {
            for i in 0..k as usize {
                let bit = t * k as usize + i;
                if bytes[16 + bit / 8] & (1 << (bit % 8)) != 0 {
                    *mask |= 1 << i;
                }
            }
        }
        Ok(ClickRecord {
            k,
            pulses,
            masks,
            rng_seed: 0,
            chunk_size: 0,
        })
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Inverse-CDF sampler over a finite distribution.
struct Sampler {
    cdf: Vec<f64>,
}

impl Sampler {
    fn from_dist(d: &PhotonNumberDist) -> Sampler {
        let mut cdf = Vec::with_capacity(d.probs().len());
        let mut acc = 0.0;
        for &p in d.probs() {
            acc += p;
            cdf.push(acc);
        }
        Sampler { cdf }
    }

    fn draw(&self, u: f64) -> usize {
        // tail mass beyond the cutoff collapses onto the last bin
        match self.cdf.iter().position(|&c| u < c) {
            Some(i) => i,
            None => self.cdf.len() - 1,
        }
    }
}

fn chunk_rng(seed: u64, chunk_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&chunk_index.to_le_bytes());
    key[16..24].copy_from_slice(&0x9E37_79B9_7F4A_7C15u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Precomputed sampling tables for one experiment model.
struct PulseTables {
    src1: Sampler,
    src2: Sampler,
    /// Output samplers indexed `[j][k]`.
    output: Vec<Vec<Sampler>>,
    /// Routing CDF over detectors; a draw beyond the last entry is a lost photon.
    route_cdf: Vec<f64>,
    dead: u32,
}

fn support_cutoff(d: &PhotonNumberDist) -> usize {
    let mut hi = 0;
    for (n, &p) in d.probs().iter().enumerate() {
        if p > 1e-12 {
            hi = n;
        }
    }
    hi
}

fn build_tables(model: &ExperimentModel, dets: &DetectorArray) -> Result<PulseTables> {
    model.validate()?;
    if dets.len() > 8 {
        return Err(Error::domain("Monte Carlo supports at most 8 detectors"));
    }
    let src1_dist = model.source_dist(SourceArm::H, 24)?;
    let src2_dist = model.source_dist(SourceArm::V, 24)?;
    let j_max = support_cutoff(&src1_dist);
    let k_max = support_cutoff(&src2_dist);
    let params = SqueezeParams::from_gain(model.gain)?;
    let n_cut = params.suggested_cutoff(1e-12) + j_max + k_max + 8;
    let mut output = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let mut row = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let d = dist_given_input(j, k, model.gain, n_cut)?;
            row.push(Sampler::from_dist(&d));
        }
        output.push(row);
    }
    let mut route_cdf = Vec::with_capacity(dets.len());
    let mut acc = 0.0;
    for &e in dets.efficiencies() {
        acc += e;
        route_cdf.push(acc);
    }
    Ok(PulseTables {
        src1: Sampler::from_dist(&src1_dist),
        src2: Sampler::from_dist(&src2_dist),
        output,
        route_cdf,
        dead: dets.dead_pulses(),
    })
}

fn simulate_chunk(tables: &PulseTables, seed: u64, chunk_index: u64, pulses: u32) -> Vec<u8> {
    let mut rng = chunk_rng(seed, chunk_index);
    let k_dets = tables.route_cdf.len();
    let mut next_live = vec![0u64; k_dets];
    let mut masks = Vec::with_capacity(pulses as usize);
    for t in 0..pulses as u64 {
        let j = tables.src1.draw(rng.gen::<f64>());
        let k = tables.src2.draw(rng.gen::<f64>());
        let n = tables.output[j][k].draw(rng.gen::<f64>());
        let mut hit: u8 = 0;
        for _ in 0..n {
            let u = rng.gen::<f64>();
            for (i, &c) in tables.route_cdf.iter().enumerate() {
                if u < c {
                    hit |= 1 << i;
                    break;
                }
            }
        }
        let mut mask: u8 = 0;
        for (i, live) in next_live.iter_mut().enumerate() {
            if hit & (1 << i) != 0 && t >= *live {
                mask |= 1 << i;
                *live = t + 1 + tables.dead as u64;
            }
        }
        masks.push(mask);
    }
    masks
}

/// Simulate `n_pulses` pulses of the experiment with the default chunking.
pub fn sample_pulses(
    model: &ExperimentModel,
    dets: &DetectorArray,
    n_pulses: u64,
    seed: u64,
) -> Result<ClickRecord> {
    sample_pulses_chunked(model, dets, n_pulses, seed, DEFAULT_CHUNK)
}

/// Simulate with an explicit chunk size. Identical `(model, detectors,
/// n_pulses, seed, chunk_size)` reproduce the record bit-exactly.
pub fn sample_pulses_chunked(
    model: &ExperimentModel,
    dets: &DetectorArray,
    n_pulses: u64,
    seed: u64,
    chunk_size: u32,
) -> Result<ClickRecord> {
    if n_pulses == 0 {
        return Err(Error::domain("pulse count must be positive"));
    }
    if chunk_size == 0 {
        return Err(Error::domain("chunk size must be positive"));
    }
    let tables = build_tables(model, dets)?;
    let n_chunks = n_pulses.div_ceil(chunk_size as u64);
    let chunks: Vec<Vec<u8>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let start = ci * chunk_size as u64;
            let len = ((n_pulses - start).min(chunk_size as u64)) as u32;
            simulate_chunk(&tables, seed, ci, len)
        })
        .collect();
    let mut masks = Vec::with_capacity(n_pulses as usize);
    for c in chunks {
        masks.extend_from_slice(&c);
    }
    Ok(ClickRecord {
        k: dets.len() as u8,
        pulses: n_pulses,
        masks,
        rng_seed: seed,
        chunk_size,
    })
}

/// Empirical m-fold coincidence probabilities of a record, under the
/// fixed-subset convention averaged over all `C(K,m)` subsets; a pulse with
/// `c` clicks contributes `C(c,m)` of them.
pub fn estimate_cm(record: &ClickRecord, m_max: usize) -> Result<CoincidenceStats> {
    if record.pulses == 0 {
        return Err(Error::domain("record is empty"));
    }
    let k = record.k as usize;
    if m_max > k {
        return Err(Error::InsufficientOrders {
            requested: m_max,
            available: k,
        });
    }
    // binom[c][m] for c,m <= 8
    let mut binom = [[0u64; 9]; 9];
    for (c, row) in binom.iter_mut().enumerate() {
        row[0] = 1;
        for m in 1..=c {
            row[m] = row[m - 1] * (c - m + 1) as u64 / m as u64;
        }
    }
    let mut counts = vec![0u64; m_max];
    for &mask in &record.masks {
        let c = mask.count_ones() as usize;
        for (m, cnt) in counts.iter_mut().enumerate() {
            *cnt += binom[c][m + 1];
        }
    }
    let subsets: Vec<u64> = (1..=m_max).map(|m| binom[k][m]).collect();
    CoincidenceStats::from_counts(counts, subsets, record.pulses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{coincidence_probs, deadtime_correct};
    use crate::dist::spdc_dist;

    fn spdc_model(g: f64, eta: f64) -> ExperimentModel {
        ExperimentModel {
            gain: g,
            transmission: 0.0,
            eta,
            ..Default::default()
        }
    }

    #[test]
    fn zero_efficiency_yields_all_zero_record() {
        let model = spdc_model(1.5, 1e-9);
        let dets = DetectorArray::new(vec![0.0; 6], 0).unwrap();
        let rec = sample_pulses(&model, &dets, 10_000, 7).unwrap();
        assert!(rec.masks().iter().all(|&m| m == 0));
        let stats = estimate_cm(&rec, 6).unwrap();
        assert!(stats.probs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn identical_seeds_reproduce_records() {
        let model = spdc_model(1.3, 0.78);
        let dets = DetectorArray::equal(0.78, 6, 0).unwrap();
        let a = sample_pulses(&model, &dets, 50_000, 42).unwrap();
        let b = sample_pulses(&model, &dets, 50_000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_pulses(&model, &dets, 50_000, 43).unwrap();
        assert_ne!(a.masks(), c.masks());
    }

    #[test]
    fn records_do_not_depend_on_worker_count() {
        let model = spdc_model(1.3, 0.78);
        let dets = DetectorArray::equal(0.78, 6, 1).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sample_pulses(&model, &dets, 200_000, 9).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| sample_pulses(&model, &dets, 200_000, 9).unwrap());
        assert_eq!(serial, parallel);
    }

    #[test]
    fn chunk_size_is_part_of_record_identity() {
        let model = spdc_model(1.3, 0.78);
        let dets = DetectorArray::equal(0.78, 6, 0).unwrap();
        let a = sample_pulses_chunked(&model, &dets, 30_000, 1, 1 << 12).unwrap();
        let b = sample_pulses_chunked(&model, &dets, 30_000, 1, 1 << 13).unwrap();
        assert_ne!(a.masks(), b.masks());
    }

    #[test]
    fn estimated_coincidences_match_closed_form() {
        let model = spdc_model(1.2, 0.78);
        let dets = DetectorArray::equal(0.78, 6, 0).unwrap();
        let rec = sample_pulses(&model, &dets, 400_000, 11).unwrap();
        let stats = estimate_cm(&rec, 6).unwrap();
        let truth = coincidence_probs(&spdc_dist(1.2, 300).unwrap(), 0.13, 6).unwrap();
        let sig = stats.sigma().unwrap();
        for m in 1..=6 {
            let diff = (stats.get(m) - truth.get(m)).abs();
            assert!(
                diff < 5.0 * sig[m - 1].max(1e-9),
                "C_{m}: mc {} vs exact {}",
                stats.get(m),
                truth.get(m)
            );
        }
    }

    #[test]
    fn linear_solve_recovers_the_distribution_from_noisy_stats() {
        let model = spdc_model(1.2, 0.78);
        let dets = DetectorArray::equal(0.78, 6, 0).unwrap();
        let rec = sample_pulses(&model, &dets, 1_000_000, 21).unwrap();
        let stats = estimate_cm(&rec, 6).unwrap();
        let solved = crate::inversion::pn_solve(&stats, 0.13, 6).unwrap();
        let truth = spdc_dist(1.2, 40).unwrap();
        let sig = solved.sigma.as_ref().unwrap();
        for n in 0..=6 {
            let diff = (solved.dist.get(n) - truth.get(n)).abs();
            assert!(
                diff < 5.0 * sig[n].max(1e-9),
                "P_{n}: {} vs {} (sigma {})",
                solved.dist.get(n),
                truth.get(n),
                sig[n]
            );
        }
    }

    #[test]
    fn degenerate_records_estimate_cleanly() {
        let rec = ClickRecord {
            k: 6,
            pulses: 100,
            masks: vec![0b111111; 100],
            rng_seed: 0,
            chunk_size: 0,
        };
        let stats = estimate_cm(&rec, 6).unwrap();
        for m in 1..=6 {
            assert_eq!(stats.get(m), 1.0);
        }
    }

    #[test]
    fn dead_time_attenuates_singles_by_lambda() {
        // one detector, bright spontaneous source: p = 1/9, p* = p/(1+p) = 0.1
        let model = spdc_model(1.5, 0.25);
        let mut m2 = model;
        m2.n_d = 1;
        let dets_live = DetectorArray::new(vec![0.25], 0).unwrap();
        let dets_dead = DetectorArray::new(vec![0.25], 1).unwrap();
        let pulses = 2_000_000;
        let live = sample_pulses(&model, &dets_live, pulses, 5).unwrap();
        let dead = sample_pulses(&m2, &dets_dead, pulses, 5).unwrap();
        let p_live = live.singles_rates()[0];
        let p_star = dead.singles_rates()[0];
        let p_true = 1.0 / 9.0;
        let sigma = (p_true * (1.0 - p_true) / pulses as f64).sqrt();
        assert!((p_live - p_true).abs() < 4.0 * sigma, "live rate {p_live}");
        let expect_star = p_true / (1.0 + p_true);
        assert!(
            (p_star - expect_star).abs() < 4.0 * sigma,
            "dead-time rate {p_star} vs {expect_star}"
        );
        // correction recovers the genuine rate
        let corr = deadtime_correct(p_star, 1).unwrap();
        assert!((corr.p - p_true).abs() < 5.0 * sigma);
    }

    #[test]
    fn binary_round_trip_preserves_masks() {
        let model = spdc_model(1.4, 0.6);
        let dets = DetectorArray::equal(0.6, 5, 1).unwrap();
        let rec = sample_pulses(&model, &dets, 12_345, 99).unwrap();
        let bytes = rec.to_bytes();
        let back = ClickRecord::from_bytes(&bytes).unwrap();
        assert_eq!(back.detectors(), rec.detectors());
        assert_eq!(back.pulses(), rec.pulses());
        assert_eq!(back.masks(), rec.masks());
    }

    #[test]
    fn malformed_headers_are_rejected() {
        assert!(ClickRecord::from_bytes(b"nope").is_err());
        let mut good = ClickRecord {
            k: 3,
            pulses: 4,
            masks: vec![1, 2, 4, 7],
            rng_seed: 0,
            chunk_size: 0,
        }
        .to_bytes();
        good[4] = 9; // bad version
        assert!(ClickRecord::from_bytes(&good).is_err());
    }
}
