use rand::Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::adapt::DomainDataset;
use crate::alignment::{
    align, AlignedSequence, Dataset, DatasetEntry, DatasetHeader, ModalityStreams,
    PersonalityVector, TimedVector, TimedWord,
};
use crate::error::{Error, Result};
use crate::seed::substream;

/// Frame length of the synthetic face, background and audio streams.
const FRAME_SECONDS: f64 = 0.25;
/// AR(1) smoothing of the feature streams.
const STREAM_AR: f64 = 0.8;
const STREAM_NOISE: f64 = 0.3;
/// Standard deviation of the per-domain latent offset.
const DOMAIN_STYLE_STD: f64 = 0.5;
/// Spread of each domain's log unigram preferences.
const TOPIC_STD: f64 = 2.0;
/// Strength of the latent's pull on word choice.
const TOKEN_TILT: f64 = 0.5;
/// Row norm scale of the trait maps; sets the spread of the labels.
const TRAIT_GAIN: f64 = 0.2;

/// Replaces the generated trait map of one domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum MapOverride {
    /// Use the map and bias of domain `from`.
    Copy { domain: usize, from: usize },
    /// Use the map of domain `from` mirrored around 0.5: `y ↦ 1 − y`.
    Invert { domain: usize, from: usize },
}

impl MapOverride {
    fn domain(&self) -> usize {
        match *self {
            MapOverride::Copy { domain, .. } | MapOverride::Invert { domain, .. } => domain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub num_domains: usize,
    pub videos_per_domain: usize,
    /// Sequence length after alignment.
    pub n: usize,
    pub d_face: usize,
    pub d_bg: usize,
    pub d_audio: usize,
    pub vocab_size: usize,
    /// Width of the latent style vector behind every video.
    pub latent_dim: usize,
    /// Transcript lengths are drawn uniformly from this range.
    pub min_words: usize,
    pub max_words: usize,
    /// Label noise standard deviation.
    pub noise_std: f64,
    /// 0: all domains share one trait map; 1: independent maps.
    pub shift_strength: f64,
    pub map_overrides: Vec<MapOverride>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            num_domains: 6,
            videos_per_domain: 120,
            n: 70,
            d_face: 16,
            d_bg: 16,
            d_audio: 24,
            vocab_size: 64,
            latent_dim: 4,
            min_words: 50,
            max_words: 80,
            noise_std: 0.05,
            shift_strength: 0.5,
            map_overrides: Vec::new(),
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("generator spec: {m}")));
        for (name, v) in [
            ("num_domains", self.num_domains),
            ("videos_per_domain", self.videos_per_domain),
            ("n", self.n),
            ("d_face", self.d_face),
            ("d_bg", self.d_bg),
            ("d_audio", self.d_audio),
            ("latent_dim", self.latent_dim),
            ("min_words", self.min_words),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2 (id 0 is reserved)".into());
        }
        if self.max_words < self.min_words {
            return bad("max_words is below min_words".into());
        }
        if !(0.0..=1.0).contains(&self.shift_strength) {
            return bad("shift_strength must lie in [0, 1]".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative".into());
        }
        for o in &self.map_overrides {
            let (d, from) = match *o {
                MapOverride::Copy { domain, from } | MapOverride::Invert { domain, from } => {
                    (domain, from)
                }
            };
            if d >= self.num_domains || from >= self.num_domains || d == from {
                return bad(format!("invalid map override {o:?}"));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            n: self.n,
            d_face: self.d_face,
            d_bg: self.d_bg,
            d_audio: self.d_audio,
            vocab_size: self.vocab_size,
        }
    }
}

/// Linear map from latent style to trait scores: `y = clip(W z + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraitMap {
    /// `5 × latent_dim`, row major.
    pub weights: Vec<f64>,
    pub bias: [f64; 5],
}

impl TraitMap {
    pub fn apply(&self, z: &[f64]) -> [f64; 5] {
        let l = z.len();
        let mut out = self.bias;
        for (k, o) in out.iter_mut().enumerate() {
            *o += (0..l).map(|j| self.weights[k * l + j] * z[j]).sum::<f64>();
        }
        out
    }
}

/// A generated corpus, one dataset per domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub header: DatasetHeader,
    pub domains: Vec<DomainDataset>,
}

impl Corpus {
    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            header: self.header,
            entries: self
                .domains
                .iter()
                .flat_map(|d| {
                    d.examples().iter().map(|s| DatasetEntry {
                        domain: d.domain_id,
                        sequence: s.clone(),
                    })
                })
                .collect(),
        }
    }

    /// Groups dataset entries by domain id, ascending. Entries keep file order.
    pub fn from_dataset(data: &Dataset) -> Result<Corpus> {
        let mut ids: Vec<usize> = data.entries.iter().map(|e| e.domain).collect();
        ids.sort_unstable();
        ids.dedup();
        let domains = ids
            .into_iter()
            .map(|id| {
                let examples = data
                    .entries
                    .iter()
                    .filter(|e| e.domain == id)
                    .map(|e| e.sequence.clone())
                    .collect();
                DomainDataset::new(id, examples)
            })
            .collect::<Result<_>>()?;
        Ok(Corpus {
            header: data.header,
            domains,
        })
    }

    pub fn domain(&self, id: usize) -> Option<&DomainDataset> {
        self.domains.iter().find(|d| d.domain_id == id)
    }
}

fn gaussian_matrix(rng: &mut impl Rng, len: usize, std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..len).map(|_| normal.sample(rng)).collect()
}

/// Per-domain trait maps: `(1 − s) · shared + s · independent`, then overrides.
pub fn trait_maps(spec: &GeneratorSpec) -> Result<Vec<TraitMap>> {
    spec.validate()?;
    let l = spec.latent_dim;
    let std = TRAIT_GAIN / (l as f64).sqrt();
    let mut rng = substream(spec.seed, "trait-map", &[]);
    let shared = gaussian_matrix(&mut rng, 5 * l, std);
    let s = spec.shift_strength;
    let mut maps: Vec<TraitMap> = (0..spec.num_domains)
        .map(|d| {
            let mut rng = substream(spec.seed, "trait-map", &[d as u64]);
            let own = gaussian_matrix(&mut rng, 5 * l, std);
            let offset = gaussian_matrix(&mut rng, 5, 0.1);
            TraitMap {
                weights: shared
                    .iter()
                    .zip(&own)
                    .map(|(a, b)| (1.0 - s) * a + s * b)
                    .collect(),
                bias: std::array::from_fn(|k| 0.5 + s * offset[k]),
            }
        })
        .collect();
    for o in &spec.map_overrides {
        maps[o.domain()] = match *o {
            MapOverride::Copy { from, .. } => maps[from].clone(),
            MapOverride::Invert { from, .. } => TraitMap {
                weights: maps[from].weights.iter().map(|w| -w).collect(),
                bias: maps[from].bias.map(|b| 1.0 - b),
            },
        };
    }
    Ok(maps)
}

/// Shared pieces of the generative model that do not depend on the domain.
struct Emitters {
    /// `d_m × latent_dim` per continuous modality.
    projections: [Vec<f64>; 3],
    /// `vocab_size × latent_dim` token affinities.
    token_affinity: Vec<f64>,
}

/// Builds a synthetic multi-domain corpus.
///
/// Every video has a latent style `z = μ_d + ε`. The transcript draws tokens
/// from a domain-specific unigram distribution tilted by `z`; face,
/// background and audio streams are AR(1) walks around a projection of `z`
/// plus a domain offset; labels are the domain's trait map applied to `z`
/// plus noise, clipped to `[0, 1]`. Streams and words are then aligned like
/// real recordings. Same spec, same bytes.
pub fn generate(spec: &GeneratorSpec) -> Result<Corpus> {
    let maps = trait_maps(spec)?;
    let l = spec.latent_dim;
    let mut rng = substream(spec.seed, "emitters", &[]);
    let proj_std = 1.0 / (l as f64).sqrt();
    let emitters = Emitters {
        projections: [spec.d_face, spec.d_bg, spec.d_audio]
            .map(|d| gaussian_matrix(&mut rng, d * l, proj_std)),
        token_affinity: gaussian_matrix(&mut rng, spec.vocab_size * l, TOKEN_TILT * proj_std),
    };
    let domains = (0..spec.num_domains)
        .map(|d| generate_domain(spec, d, &maps[d], &emitters))
        .collect::<Result<_>>()?;
    Ok(Corpus {
        header: spec.header(),
        domains,
    })
}

fn generate_domain(
    spec: &GeneratorSpec,
    domain: usize,
    map: &TraitMap,
    emitters: &Emitters,
) -> Result<DomainDataset> {
    let l = spec.latent_dim;
    let mut rng = substream(spec.seed, "domain", &[domain as u64]);
    let style = gaussian_matrix(&mut rng, l, DOMAIN_STYLE_STD);
    let dims = [spec.d_face, spec.d_bg, spec.d_audio];
    let stream_offsets = dims.map(|d| gaussian_matrix(&mut rng, d, 0.5));
    // domain topic: a fixed preference over the vocabulary, UNK excluded
    let topic = gaussian_matrix(&mut rng, spec.vocab_size, TOPIC_STD);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let label_noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("noise");

    let mut examples = Vec::with_capacity(spec.videos_per_domain);
    for video in 0..spec.videos_per_domain {
        let mut rng = substream(spec.seed, "video", &[domain as u64, video as u64]);
        let z: Vec<f64> = style.iter().map(|m| m + std_normal.sample(&mut rng)).collect();

        let weights: Vec<f64> = (0..spec.vocab_size)
            .map(|w| {
                if w == 0 {
                    return 0.0;
                }
                let tilt: f64 = (0..l).map(|j| emitters.token_affinity[w * l + j] * z[j]).sum();
                (topic[w] + tilt).exp()
            })
            .collect();
        let tokens = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("token distribution: {e}")))?;
        let count = rng.gen_range(spec.min_words..=spec.max_words);
        let mut words = Vec::with_capacity(count);
        let mut t = 0.0;
        for _ in 0..count {
            let start = t + rng.gen_range(0.0..0.1);
            let end = start + rng.gen_range(0.2..0.6);
            words.push(TimedWord {
                token_id: tokens.sample(&mut rng),
                start,
                end,
            });
            t = end;
        }

        let frames = ((t / FRAME_SECONDS).ceil() as usize).max(1);
        let streams: Vec<Vec<TimedVector>> = (0..3)
            .map(|m| {
                let d = dims[m];
                let proj = &emitters.projections[m];
                let centre: Vec<f64> = (0..d)
                    .map(|r| {
                        stream_offsets[m][r]
                            + (0..l).map(|j| proj[r * l + j] * z[j]).sum::<f64>()
                    })
                    .collect();
                let mut x = centre.clone();
                (0..frames)
                    .map(|f| {
                        for (xr, c) in x.iter_mut().zip(&centre) {
                            *xr = STREAM_AR * *xr
                                + (1.0 - STREAM_AR) * c
                                + STREAM_NOISE * std_normal.sample(&mut rng);
                        }
                        TimedVector {
                            start: f as f64 * FRAME_SECONDS,
                            end: (f + 1) as f64 * FRAME_SECONDS,
                            values: x.clone(),
                        }
                    })
                    .collect()
            })
            .collect();

        let raw = map.apply(&z);
        let label = raw.map(|y| {
            let noise = if spec.noise_std > 0.0 {
                label_noise.sample(&mut rng)
            } else {
                0.0
            };
            (y + noise).clamp(0.0, 1.0)
        });
        let mut seq = align(
            &words,
            &ModalityStreams {
                face: &streams[0],
                background: &streams[1],
                audio: &streams[2],
            },
            spec.header().dims(),
            spec.n,
        )?;
        seq.label = Some(PersonalityVector::new(label)?);
        examples.push(seq);
    }
    DomainDataset::new(domain, examples)
}

/// Examples of every domain, flattened in domain order.
pub fn all_sequences(corpus: &Corpus) -> Vec<&AlignedSequence> {
    corpus.domains.iter().flat_map(|d| d.examples()).collect()
}
