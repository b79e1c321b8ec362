//! Synthetic corpus whose labels are a fixed function of a 5-residue window.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{collapse_ssp, SequenceRecord, TaskScheme, AMINO_ALPHABET, PSSM_WIDTH};

/// Half-width of the window that determines each label.
pub const SYNTH_WINDOW_RADIUS: usize = 2;

const RULE_SEED: u64 = 0x5eed_0f_7a5c;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sequences: 100,
            min_len: 20,
            max_len: 60,
        }
    }
}

/// Sizes of the priority-rank blocks that share a class, lowest rank first.
const BLOCK_SIZES: [usize; 8] = [3, 3, 3, 3, 2, 2, 2, 2];

/// Labeling rule: residues have distinct priorities and each belongs to a
/// class. Position `t` takes the class of the highest-priority residue in
/// its window. Residue frequencies make the label marginal uniform on
/// interior windows.
struct WindowRule {
    rank: Vec<usize>,
    class: Vec<usize>,
    cumulative: Vec<f64>,
}

impl WindowRule {
    fn build() -> Self {
        let mut rng = Rng::new(RULE_SEED);
        let mut by_rank: Vec<usize> = (0..PSSM_WIDTH).collect();
        rng.shuffle(&mut by_rank);
        let mut block_class: Vec<usize> = (0..BLOCK_SIZES.len()).collect();
        rng.shuffle(&mut block_class);
        let window = (2 * SYNTH_WINDOW_RADIUS + 1) as f64;
        let blocks = BLOCK_SIZES.len() as f64;
        let mut rank = vec![0; PSSM_WIDTH];
        let mut class = vec![0; PSSM_WIDTH];
        let mut freq = vec![0.0; PSSM_WIDTH];
        let mut k = 0;
        for (j, &size) in BLOCK_SIZES.iter().enumerate() {
            // The window maximum falls in blocks 0..=j with probability ((j+1)/8).
            let lo = (j as f64 / blocks).powf(1.0 / window);
            let hi = ((j + 1) as f64 / blocks).powf(1.0 / window);
            for _ in 0..size {
                let r = by_rank[k];
                rank[r] = k;
                class[r] = block_class[j];
                freq[r] = (hi - lo) / size as f64;
                k += 1;
            }
        }
        let mut acc = 0.0;
        let cumulative = freq
            .iter()
            .map(|f| {
                acc += f;
                acc
            })
            .collect();
        WindowRule { rank, class, cumulative }
    }

    fn get() -> &'static WindowRule {
        static RULE: OnceLock<WindowRule> = OnceLock::new();
        RULE.get_or_init(WindowRule::build)
    }

    fn sample_residue(&self, rng: &mut Rng) -> usize {
        let u = rng.next_f64() * self.cumulative[PSSM_WIDTH - 1];
        self.cumulative.iter().position(|&c| u < c).unwrap_or(PSSM_WIDTH - 1)
    }

    fn label(&self, residues: &[usize], t: usize) -> usize {
        let lo = t.saturating_sub(SYNTH_WINDOW_RADIUS);
        let hi = (t + SYNTH_WINDOW_RADIUS + 1).min(residues.len());
        residues[lo..hi]
            .iter()
            .max_by_key(|&&r| self.rank[r])
            .map_or(0, |&r| self.class[r])
    }
}

/// 8-class label of position `t`, reading only residues `t-2..=t+2`.
pub fn window_label(residues: &[usize], t: usize) -> usize {
    WindowRule::get().label(residues, t)
}

/// Random chains with all four task labels.
///
/// The PSSM is the one-hot residue plus uniform noise on `[0, 0.1)`. The
/// dssp label is the class of the highest-priority residue within two
/// positions, with residue frequencies chosen so all eight classes are
/// equally likely away from the chain ends. ssp
/// is its collapse, sar marks coil-like classes accessible and saa
/// additionally marks charged residues accessible.
pub fn synth_generate(rng: &mut Rng, cfg: SynthConfig) -> Result<Vec<SequenceRecord>> {
    if cfg.sequences == 0 {
        return Err(Error::Config("synthetic corpus needs at least one sequence".into()));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "invalid synthetic length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    let rule = WindowRule::get();
    let dssp = TaskScheme::by_name("dssp").expect("built-in");
    let letters: Vec<char> = AMINO_ALPHABET.chars().take(PSSM_WIDTH).collect();
    let mut out = Vec::with_capacity(cfg.sequences);
    for n in 0..cfg.sequences {
        let len = cfg.min_len + rng.below(cfg.max_len - cfg.min_len + 1);
        let residues: Vec<usize> = (0..len).map(|_| rule.sample_residue(rng)).collect();
        let mut pssm = rng.uniform(0.0, 0.1, &[len, PSSM_WIDTH])?;
        for (t, &r) in residues.iter().enumerate() {
            pssm.data_mut()[t * PSSM_WIDTH + r] += 1.0;
        }
        let classes: Vec<usize> = (0..len).map(|t| rule.label(&residues, t)).collect();
        let dssp_labels = dssp.decode(&classes);
        let ssp = collapse_ssp(&dssp_labels)?;
        let sar: String = dssp_labels
            .chars()
            .map(|c| if "TSL".contains(c) { 'A' } else { 'I' })
            .collect();
        let saa: String = dssp_labels
            .chars()
            .zip(&residues)
            .map(|(c, &r)| {
                if "TSL".contains(c) || "DEKR".contains(letters[r]) {
                    'A'
                } else {
                    'I'
                }
            })
            .collect();
        let seq: String = residues.iter().map(|&r| letters[r]).collect();
        let mut labels = BTreeMap::new();
        labels.insert("dssp".to_string(), dssp_labels);
        labels.insert("ssp".to_string(), ssp);
        labels.insert("sar".to_string(), sar);
        labels.insert("saa".to_string(), saa);
        out.push(SequenceRecord::new(format!("synth{n:06}"), &seq, pssm, labels)?);
    }
    Ok(out)
}
