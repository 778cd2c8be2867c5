//! Synthetic bundles with known ground truth: random word vectors, targets
//! that are a fixed function of them, and an identity translation table.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::embeddings::{write_embedding_store, EmbeddingStore};
use crate::lexicon::{
    write_lexicon, Lexicon, LexiconEntry, ScaleSpec, Split, VariableSet, BE5_NAMES, VAD_NAMES,
};
use crate::translation::TranslationTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub vocab: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Noise sd relative to the target sd.
    pub noise: f64,
    /// Adds a quadratic term to every target.
    pub nonlinear: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { dim: 16, vocab: 2000, train: 500, dev: 50, test: 50, noise: 0.05, nonlinear: false, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub store: EmbeddingStore,
    /// Split-tagged source lexicon with noisy ratings.
    pub source: Lexicon,
    /// Noiseless ratings of every vocabulary word.
    pub clean: Lexicon,
    pub table: TranslationTable,
    pub test_words: Vec<String>,
    pub dev_words: Vec<String>,
}

/// Files written by [`SyntheticData::write_to`].
#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub embeddings: PathBuf,
    pub source: PathBuf,
    /// Untagged source with a few entries that source filtering removes.
    pub raw_source: PathBuf,
    pub test_ref: PathBuf,
    pub dev_ref: PathBuf,
    pub table: PathBuf,
    pub gold: PathBuf,
}

fn target_center_spread(name: &str) -> (f64, f64) {
    if VAD_NAMES.contains(&name) {
        (5.0, 1.0)
    } else {
        (3.0, 0.45)
    }
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    let n_source = spec.train + spec.dev + spec.test;
    assert!(n_source <= spec.vocab, "source words must come from the vocabulary");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words: Vec<String> = (0..spec.vocab).map(|i| format!("w{i:05}")).collect();
    let vectors: Vec<Vec<f32>> = (0..spec.vocab)
        .map(|_| (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let store = EmbeddingStore::from_pairs(spec.dim, words.iter().cloned().zip(vectors.iter().cloned()))
        .expect("consistent dimensions");

    let names: Vec<&str> = VAD_NAMES.iter().chain(BE5_NAMES.iter()).copied().collect();
    let variables = VariableSet::new(&names).expect("distinct names");
    let scale = 1.0 / (spec.dim as f64).sqrt();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..spec.dim).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
    };
    let mut raw = vec![vec![0.0; names.len()]; spec.vocab];
    for j in 0..names.len() {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        for (i, v) in vectors.iter().enumerate() {
            let x: Vec<f64> = v.iter().map(|&c| c as f64).collect();
            let dot = |w: &[f64]| x.iter().zip(w).map(|(p, q)| p * q).sum::<f64>();
            let mut t = dot(&a);
            if spec.nonlinear {
                t += dot(&b).powi(2);
            }
            raw[i][j] = t;
        }
    }
    // standardize each variable over the vocabulary, then map onto its scale
    let mut clean = raw.clone();
    for (j, name) in names.iter().enumerate() {
        let n = spec.vocab as f64;
        let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let (center, spread) = target_center_spread(name);
        for row in clean.iter_mut() {
            row[j] = center + spread * (row[j] - mean) / sd;
        }
    }

    let mut order: Vec<usize> = (0..spec.vocab).collect();
    order.shuffle(&mut rng);
    let source_idx = &order[..n_source];
    let mut entries = Vec::with_capacity(n_source);
    for (k, &i) in source_idx.iter().enumerate() {
        let split = if k < spec.train {
            Split::Train
        } else if k < spec.train + spec.dev {
            Split::Dev
        } else {
            Split::Test
        };
        let values = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let (_, spread) = target_center_spread(name);
                let s = ScaleSpec::builtin_for(name).expect("built-in variable");
                let noise = Normal::new(0.0, spec.noise * spread).expect("valid sd").sample(&mut rng);
                (clean[i][j] + noise).clamp(s.min, s.max)
            })
            .collect();
        entries.push(LexiconEntry::new(words[i].clone(), values).with_split(split));
    }
    let split_words = |s: Split| -> Vec<String> {
        entries.iter().filter(|e| e.split == s).map(|e| e.word.clone()).collect()
    };
    let test_words = split_words(Split::Test);
    let dev_words = split_words(Split::Dev);
    let source = Lexicon::with_builtin_scales("en", variables.clone(), entries).expect("values within scale");

    let clean_entries = words.iter().zip(&clean).map(|(w, v)| LexiconEntry::new(w.clone(), v.clone())).collect();
    let clean = Lexicon::new("en", variables.clone(), vec![ScaleSpec::UNBOUNDED; names.len()], clean_entries)
        .expect("finite values");

    let mut table = TranslationTable::new("en", "en");
    for e in source.entries() {
        table.insert(e.word.clone(), e.word.clone());
    }
    SyntheticData { store, source, clean, table, test_words, dev_words }
}

impl SyntheticData {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<SyntheticPaths> {
        fs::create_dir_all(dir)?;
        let paths = SyntheticPaths {
            embeddings: dir.join("vectors.vec"),
            source: dir.join("source_split.tsv"),
            raw_source: dir.join("source_raw.tsv"),
            test_ref: dir.join("test_ref.txt"),
            dev_ref: dir.join("dev_ref.txt"),
            table: dir.join("table.tsv"),
            gold: dir.join("gold.tsv"),
        };
        let to_io = |e: crate::lexicon::LexiconError| std::io::Error::other(e.to_string());

        let mut w = BufWriter::new(fs::File::create(&paths.embeddings)?);
        write_embedding_store(&self.store, &mut w)?;
        w.flush()?;
        write_lexicon(&self.source, BufWriter::new(fs::File::create(&paths.source)?)).map_err(to_io)?;
        write_lexicon(&self.clean, BufWriter::new(fs::File::create(&paths.gold)?)).map_err(to_io)?;

        // untagged, plus entries that source filtering removes
        let width = self.source.variables().len();
        let mut entries: Vec<LexiconEntry> = self
            .source
            .entries()
            .iter()
            .map(|e| LexiconEntry::new(e.word.clone(), e.emotions.values().to_vec()))
            .collect();
        entries.insert(1, LexiconEntry::new("Capital", vec![3.0; width]));
        entries.insert(3, LexiconEntry::new("ice cream", vec![3.0; width]));
        let raw = Lexicon::new("en", self.source.variables().clone(), self.source.scales().to_vec(), entries)
            .map_err(to_io)?;
        write_lexicon(&raw, BufWriter::new(fs::File::create(&paths.raw_source)?)).map_err(to_io)?;
        fs::write(&paths.test_ref, self.test_words.join("\n") + "\n")?;
        fs::write(&paths.dev_ref, self.dev_words.join("\n") + "\n")?;
        let mut w = BufWriter::new(fs::File::create(&paths.table)?);
        self.table.write(&mut w)?;
        w.flush()?;
        Ok(paths)
    }
}
