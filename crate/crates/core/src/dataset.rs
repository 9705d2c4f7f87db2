//! GAN training corpus: segment long audio, turn segments into tiles, and
//! cluster tiles into mixed training sets.
//!
//! Corpora can be built in memory (small runs, tests) or streamed to a
//! directory of binary tile files plus a manifest; a full-scale corpus
//! (192 000 tiles) is too large to rebuild per run or to hold in RAM.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::audio_io::{self, AudioBuffer};
use crate::encode::{self, Sha256};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::spectral::{
    bootstrap_tiles, power, stft_fixed_frames, NormalizationMeta, StftConfig, Tile, TILE_LEN,
    TILE_SIZE,
};

pub const DEFAULT_SEGMENT_LEN: usize = 32_400;
pub const DEFAULT_SEGMENTS_PER_AUDIO: usize = 1_600;
pub const DEFAULT_TILES_PER_SEGMENT: usize = 30;
pub const DEFAULT_N_SETS: usize = 12;
pub const DEFAULT_W_MAJOR: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Evenly strided starts modulo the slack, covering the whole recording.
    SequentialWrap,
    /// Uniform random starts, deterministic per seed.
    Random,
}

#[derive(Debug, Clone)]
pub struct SegmentPlan {
    pub segment_len: usize,
    pub segments_per_audio: usize,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for SegmentPlan {
    fn default() -> Self {
        SegmentPlan {
            segment_len: DEFAULT_SEGMENT_LEN,
            segments_per_audio: DEFAULT_SEGMENTS_PER_AUDIO,
            selection: Selection::SequentialWrap,
            seed: 0,
        }
    }
}

impl SegmentPlan {
    pub fn validate(&self, stft_cfg: &StftConfig) -> Result<()> {
        if self.segment_len < stft_cfg.window_len {
            return Err(Error::Config(format!(
                "segment_len {} is shorter than the stft window {}",
                self.segment_len, stft_cfg.window_len
            )));
        }
        if self.segments_per_audio == 0 {
            return Err(Error::Config("segments_per_audio must be >= 1".into()));
        }
        Ok(())
    }
}

fn segment_offsets(len: usize, plan: &SegmentPlan) -> Result<Vec<usize>> {
    if len < plan.segment_len {
        return Err(Error::TooShort {
            len,
            min: plan.segment_len,
        });
    }
    let span = len - plan.segment_len;
    let count = plan.segments_per_audio;
    let offsets = match plan.selection {
        Selection::SequentialWrap => {
            if count == 1 || span == 0 {
                vec![0; count]
            } else {
                let stride = (span / (count - 1)).max(1);
                (0..count).map(|i| (i * stride) % span).collect()
            }
        }
        Selection::Random => {
            let mut rng = Rng::substream(plan.seed, 0x534c4943); // "SLIC"
            (0..count).map(|_| rng.below(span + 1)).collect()
        }
    };
    Ok(offsets)
}

/// Slice `segments_per_audio` segments of `segment_len` samples from a
/// buffer, per the plan's selection strategy.
pub fn slice_segments(buffer: &AudioBuffer, plan: &SegmentPlan) -> Result<Vec<AudioBuffer>> {
    let offsets = segment_offsets(buffer.len(), plan)?;
    offsets
        .iter()
        .enumerate()
        .map(|(i, &off)| {
            let channels = buffer
                .channels()
                .iter()
                .map(|ch| ch[off..off + plan.segment_len].to_vec())
                .collect();
            AudioBuffer::new(
                channels,
                buffer.sample_rate(),
                format!("{}#{i}", buffer.source_label),
            )
        })
        .collect()
}

fn segment_seed(seed: u64, audio_idx: usize, segment_idx: usize) -> u64 {
    seed ^ (audio_idx as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (segment_idx as u64).wrapping_mul(0xC2B2AE3D27D4EB4F)
}

fn tiles_for_segment(
    segment: &AudioBuffer,
    stft_cfg: &StftConfig,
    tiles_per_spec: usize,
    seed: u64,
) -> Result<Vec<Tile>> {
    let mono = audio_io::to_mono(segment);
    let spec = power(&stft_fixed_frames(&mono, stft_cfg, TILE_SIZE)?);
    bootstrap_tiles(&spec, tiles_per_spec, seed)
}

/// Build the full labeled tile corpus in memory:
/// slice → stft → power → log-normalize → bootstrap, per audio.
pub fn build_corpus(
    audios: &[AudioBuffer],
    plan: &SegmentPlan,
    stft_cfg: &StftConfig,
    tiles_per_spec: usize,
    seed: u64,
) -> Result<Vec<(String, Tile)>> {
    plan.validate(stft_cfg)?;
    let per_audio: Vec<Result<Vec<(String, Tile)>>> = crate::par::map_indexed(audios.len(), |audio_idx| {
        let audio = &audios[audio_idx];
            let segments = slice_segments(audio, plan)?;
            let mut out = Vec::with_capacity(segments.len() * tiles_per_spec);
            for (seg_idx, segment) in segments.iter().enumerate() {
                let tiles = tiles_for_segment(
                    segment,
                    stft_cfg,
                    tiles_per_spec,
                    segment_seed(seed, audio_idx, seg_idx),
                )?;
                for tile in tiles {
                    out.push((audio.source_label.clone(), tile));
                }
            }
            Ok(out)
        });
    let mut corpus = Vec::new();
    for chunk in per_audio {
        corpus.extend(chunk?);
    }
    Ok(corpus)
}

/// One manifest line: where a tile lives on disk and which set owns it.
#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub tile_id: u64,
    pub label: String,
    /// 0 = not yet assigned to a training set.
    pub set_id: usize,
    pub file: String,
    pub offset: u64,
    pub sha_prefix: String,
}

/// Corpus manifest: per-tile records plus the corpus-average normalization
/// statistics (needed to map generated tiles back to power spectrograms).
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<TileRecord>,
    pub meta: NormalizationMeta,
}

pub const MANIFEST_NAME: &str = "manifest.csv";
const MANIFEST_VERSION: &str = "# cyclospec corpus v1";
const MANIFEST_HEADER: &str = "tile_id,audio_label,set_id,file,offset,sha256-prefix";

fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn tile_payload(tile: &Tile) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(TILE_LEN * 4);
    for v in &tile.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Stream a corpus to `out_dir`: one binary tile file per audio label
/// (raw little-endian f32, 3x64x64, C row-major) plus the manifest,
/// written once at the end via an atomic rename.
pub fn build_corpus_to_dir(
    audio_paths: &[PathBuf],
    plan: &SegmentPlan,
    stft_cfg: &StftConfig,
    tiles_per_spec: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<CorpusManifest> {
    plan.validate(stft_cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::new();
    let mut tile_id: u64 = 0;
    let mut meta_sum = (0.0f64, 0.0f64, 0.0f64);
    let mut meta_count = 0usize;
    for (audio_idx, path) in audio_paths.iter().enumerate() {
        let audio = audio_io::load_wav(path)?;
        let label = audio.source_label.clone();
        let file_name = format!("tiles_{}.bin", sanitize_label(&label));
        let file_path = out_dir.join(&file_name);
        let mut writer = BufWriter::new(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&file_path)
                .map_err(|e| Error::io(&file_path, e))?,
        );
        let mut offset = fs::metadata(&file_path)
            .map_err(|e| Error::io(&file_path, e))?
            .len();
        let segments = slice_segments(&audio, plan)?;
        drop(audio);
        // tiles computed in parallel per chunk of segments, written in order
        for (chunk_idx, chunk) in segments.chunks(64).enumerate() {
            let base = chunk_idx * 64;
            let chunk_tiles: Vec<Result<Vec<Tile>>> = crate::par::map_indexed(chunk.len(), |i| {
                tiles_for_segment(
                    &chunk[i],
                    stft_cfg,
                    tiles_per_spec,
                    segment_seed(seed, audio_idx, base + i),
                )
            });
            for tiles in chunk_tiles {
                for tile in tiles? {
                    let payload = tile_payload(&tile);
                    let mut sha = Sha256::new();
                    sha.update(&payload);
                    writer
                        .write_all(&payload)
                        .map_err(|e| Error::io(&file_path, e))?;
                    records.push(TileRecord {
                        tile_id,
                        label: label.clone(),
                        set_id: 0,
                        file: file_name.clone(),
                        offset,
                        sha_prefix: encode::hex(&sha.finalize())[..16].to_string(),
                    });
                    meta_sum.0 += tile.meta.log_epsilon;
                    meta_sum.1 += tile.meta.min_log;
                    meta_sum.2 += tile.meta.max_log;
                    meta_count += 1;
                    offset += payload.len() as u64;
                    tile_id += 1;
                }
            }
        }
        writer.flush().map_err(|e| Error::io(&file_path, e))?;
    }
    if meta_count == 0 {
        return Err(Error::Manifest("corpus produced no tiles".into()));
    }
    let n = meta_count as f64;
    let manifest = CorpusManifest {
        records,
        meta: NormalizationMeta {
            log_epsilon: meta_sum.0 / n,
            min_log: meta_sum.1 / n,
            max_log: meta_sum.2 / n,
        },
    };
    write_manifest(&manifest, out_dir)?;
    Ok(manifest)
}

/// Write the manifest atomically (temp file + rename).
pub fn write_manifest(manifest: &CorpusManifest, dir: &Path) -> Result<()> {
    let tmp = dir.join(format!("{MANIFEST_NAME}.tmp"));
    let final_path = dir.join(MANIFEST_NAME);
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
        writeln!(w, "{MANIFEST_VERSION}").map_err(|e| Error::io(&tmp, e))?;
        writeln!(
            w,
            "# meta epsilon={:.17e} min_log={:.17e} max_log={:.17e}",
            manifest.meta.log_epsilon, manifest.meta.min_log, manifest.meta.max_log
        )
        .map_err(|e| Error::io(&tmp, e))?;
        writeln!(w, "{MANIFEST_HEADER}").map_err(|e| Error::io(&tmp, e))?;
        for r in &manifest.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.tile_id, r.label, r.set_id, r.file, r.offset, r.sha_prefix
            )
            .map_err(|e| Error::io(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, &final_path).map_err(|e| Error::io(&final_path, e))
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut meta = None;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line == MANIFEST_VERSION || line == MANIFEST_HEADER || line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# meta ") {
            let mut fields = BTreeMap::new();
            for kv in rest.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Manifest(format!("bad meta field '{kv}'")))?;
                let parsed: f64 = v
                    .parse()
                    .map_err(|_| Error::Manifest(format!("bad meta value '{v}'")))?;
                fields.insert(k.to_string(), parsed);
            }
            meta = Some(NormalizationMeta {
                log_epsilon: *fields
                    .get("epsilon")
                    .ok_or_else(|| Error::Manifest("meta missing epsilon".into()))?,
                min_log: *fields
                    .get("min_log")
                    .ok_or_else(|| Error::Manifest("meta missing min_log".into()))?,
                max_log: *fields
                    .get("max_log")
                    .ok_or_else(|| Error::Manifest("meta missing max_log".into()))?,
            });
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Manifest(format!(
                "line {}: expected 6 fields, got {}",
                lineno + 1,
                parts.len()
            )));
        }
        let parse_err = |what: &str| Error::Manifest(format!("line {}: bad {what}", lineno + 1));
        records.push(TileRecord {
            tile_id: parts[0].parse().map_err(|_| parse_err("tile_id"))?,
            label: parts[1].to_string(),
            set_id: parts[2].parse().map_err(|_| parse_err("set_id"))?,
            file: parts[3].to_string(),
            offset: parts[4].parse().map_err(|_| parse_err("offset"))?,
            sha_prefix: parts[5].to_string(),
        });
    }
    Ok(CorpusManifest {
        records,
        meta: meta.ok_or_else(|| Error::Manifest("manifest missing meta line".into()))?,
    })
}

/// Random access to tile payloads referenced by a manifest.
pub struct TileStore {
    dir: PathBuf,
    pub manifest: CorpusManifest,
}

impl TileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let manifest = read_manifest(&dir)?;
        Ok(TileStore { dir, manifest })
    }

    /// Read one tile payload; the per-tile normalization meta is not stored
    /// in the payload, so the corpus-average meta is attached.
    pub fn read_tile(&self, record: &TileRecord) -> Result<Tile> {
        let path = self.dir.join(&record.file);
        let mut f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        f.seek(SeekFrom::Start(record.offset))
            .map_err(|e| Error::io(&path, e))?;
        let mut bytes = vec![0u8; TILE_LEN * 4];
        f.read_exact(&mut bytes).map_err(|e| Error::io(&path, e))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Tile {
            data,
            row_map: Vec::new(),
            meta: self.manifest.meta,
        })
    }
}

/// A clustered training set: tiles mixed across source audios with one
/// dominant label.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub set_id: usize,
    pub tiles: Vec<Tile>,
    pub source_mix: BTreeMap<String, f64>,
}

/// Per-set per-label tile counts following the deterministic major-label
/// schedule: set k's major label is labels[(k-1) mod n_labels] with weight
/// `w_major`; remaining labels split the rest equally.
pub fn set_label_counts(
    label_totals: &BTreeMap<String, usize>,
    n_sets: usize,
    w_major: f64,
) -> Result<Vec<BTreeMap<String, usize>>> {
    let labels: Vec<&String> = label_totals.keys().collect();
    let n_labels = labels.len();
    if n_labels < 2 {
        return Err(Error::Config("clustering needs at least 2 labels".into()));
    }
    if !(0.0..=1.0).contains(&w_major) {
        return Err(Error::Config("w_major must lie in [0, 1]".into()));
    }
    let total: usize = label_totals.values().sum();
    let set_size = total / n_sets;
    if set_size == 0 {
        return Err(Error::Config(format!(
            "corpus of {total} tiles cannot fill {n_sets} sets"
        )));
    }
    let minor = (1.0 - w_major) / (n_labels - 1) as f64;
    let mut plans = Vec::with_capacity(n_sets);
    for k in 1..=n_sets {
        let major = labels[(k - 1) % n_labels];
        // floor counts, then hand out the remainder by largest fraction
        let mut counts: Vec<(String, usize, f64)> = labels
            .iter()
            .map(|&l| {
                let share = if l == major { w_major } else { minor };
                let exact = share * set_size as f64;
                (l.clone(), exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let mut assigned: usize = counts.iter().map(|c| c.1).sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].2.partial_cmp(&counts[a].2).unwrap().then(a.cmp(&b)));
        for &i in &order {
            if assigned >= set_size {
                break;
            }
            counts[i].1 += 1;
            assigned += 1;
        }
        plans.push(counts.into_iter().map(|(l, c, _)| (l, c)).collect());
    }
    Ok(plans)
}

fn shuffled_label_pools<T: Clone + Ord>(
    keys: impl Iterator<Item = (T, usize)>,
    seed: u64,
) -> BTreeMap<T, Vec<usize>> {
    let mut pools: BTreeMap<T, Vec<usize>> = BTreeMap::new();
    for (label, idx) in keys {
        pools.entry(label).or_default().push(idx);
    }
    for (label_idx, pool) in pools.values_mut().enumerate() {
        let mut rng = Rng::substream(seed, 0x504f4f4c ^ label_idx as u64); // "POOL"
        rng.shuffle(pool);
    }
    pools
}

/// Cluster labeled tiles into `n_sets` mixed training sets. Tiles are drawn
/// without replacement from per-label pools shuffled deterministically by
/// `seed`; leftover tiles are discarded.
pub fn cluster_sets(
    corpus: Vec<(String, Tile)>,
    n_sets: usize,
    w_major: f64,
    seed: u64,
) -> Result<Vec<TrainingSet>> {
    let mut label_totals: BTreeMap<String, usize> = BTreeMap::new();
    for (label, _) in &corpus {
        *label_totals.entry(label.clone()).or_insert(0) += 1;
    }
    let plans = set_label_counts(&label_totals, n_sets, w_major)?;
    let pools = shuffled_label_pools(
        corpus
            .iter()
            .enumerate()
            .map(|(i, (label, _))| (label.clone(), i)),
        seed,
    );
    let mut cursors: BTreeMap<String, usize> = pools.keys().map(|l| (l.clone(), 0)).collect();
    let mut tiles: Vec<Option<Tile>> = corpus.into_iter().map(|(_, t)| Some(t)).collect();
    let mut sets = Vec::with_capacity(n_sets);
    for (k, plan) in plans.iter().enumerate() {
        let set_size: usize = plan.values().sum();
        let mut set_tiles = Vec::with_capacity(set_size);
        let mut mix = BTreeMap::new();
        for (label, &count) in plan {
            let pool = &pools[label];
            let cursor = cursors.get_mut(label).unwrap();
            if *cursor + count > pool.len() {
                return Err(Error::InsufficientTiles {
                    label: label.clone(),
                    needed: count,
                    available: pool.len() - *cursor,
                });
            }
            for &idx in &pool[*cursor..*cursor + count] {
                set_tiles.push(tiles[idx].take().expect("tile drawn twice"));
            }
            *cursor += count;
            mix.insert(label.clone(), count as f64 / set_size as f64);
        }
        sets.push(TrainingSet {
            set_id: k + 1,
            tiles: set_tiles,
            source_mix: mix,
        });
    }
    Ok(sets)
}

/// Assign manifest records to training sets with the same schedule as
/// [`cluster_sets`], rewriting set ids in place. Returns the realized
/// per-set mixes.
pub fn cluster_manifest(
    manifest: &mut CorpusManifest,
    n_sets: usize,
    w_major: f64,
    seed: u64,
) -> Result<Vec<BTreeMap<String, f64>>> {
    let mut label_totals: BTreeMap<String, usize> = BTreeMap::new();
    for r in &manifest.records {
        *label_totals.entry(r.label.clone()).or_insert(0) += 1;
    }
    let plans = set_label_counts(&label_totals, n_sets, w_major)?;
    let pools = shuffled_label_pools(
        manifest
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.label.clone(), i)),
        seed,
    );
    for r in &mut manifest.records {
        r.set_id = 0;
    }
    let mut cursors: BTreeMap<String, usize> = pools.keys().map(|l| (l.clone(), 0)).collect();
    let mut mixes = Vec::with_capacity(n_sets);
    for (k, plan) in plans.iter().enumerate() {
        let set_size: usize = plan.values().sum();
        let mut mix = BTreeMap::new();
        for (label, &count) in plan {
            let pool = &pools[label];
            let cursor = cursors.get_mut(label).unwrap();
            if *cursor + count > pool.len() {
                return Err(Error::InsufficientTiles {
                    label: label.clone(),
                    needed: count,
                    available: pool.len() - *cursor,
                });
            }
            for &idx in &pool[*cursor..*cursor + count] {
                manifest.records[idx].set_id = k + 1;
            }
            *cursor += count;
            mix.insert(label.clone(), count as f64 / set_size as f64);
        }
        mixes.push(mix);
    }
    Ok(mixes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_audio(seconds: f64, label: &str, seed: u64) -> AudioBuffer {
        let buf = audio_io::gen_white_noise(seconds, 22_050, seed).unwrap();
        AudioBuffer::new(
            buf.channels().to_vec(),
            buf.sample_rate(),
            label.to_string(),
        )
        .unwrap()
    }

    #[test]
    fn paper_counts_segment_slicing() {
        let buf = noise_audio(120.0, "long", 1);
        let plan = SegmentPlan::default();
        let segments = slice_segments(&buf, &plan).unwrap();
        assert_eq!(segments.len(), 1600);
        assert!(segments.iter().all(|s| s.len() == 32_400));
    }

    #[test]
    fn single_segment_at_offset_zero() {
        let buf = noise_audio(2.0, "a", 2);
        let plan = SegmentPlan {
            segments_per_audio: 1,
            ..SegmentPlan::default()
        };
        let segments = slice_segments(&buf, &plan).unwrap();
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].channel(0), &buf.channel(0)[..32_400]);
    }

    #[test]
    fn random_selection_is_deterministic() {
        let buf = noise_audio(5.0, "a", 3);
        let plan = SegmentPlan {
            segments_per_audio: 10,
            selection: Selection::Random,
            seed: 42,
            ..SegmentPlan::default()
        };
        let a = slice_segments(&buf, &plan).unwrap();
        let b = slice_segments(&buf, &plan).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_short_audio_is_rejected() {
        let buf = noise_audio(1.0, "short", 4);
        let plan = SegmentPlan::default();
        assert!(matches!(
            slice_segments(&buf, &plan),
            Err(Error::TooShort { .. })
        ));
    }

    fn tiny_plan(segments: usize) -> SegmentPlan {
        SegmentPlan {
            segment_len: 32_400,
            segments_per_audio: segments,
            selection: Selection::SequentialWrap,
            seed: 7,
        }
    }

    #[test]
    fn corpus_counts_labels_and_determinism() {
        let audios = vec![noise_audio(3.0, "alpha", 5), noise_audio(3.0, "beta", 6)];
        let cfg = StftConfig::tile_default();
        let corpus = build_corpus(&audios, &tiny_plan(2), &cfg, 3, 11).unwrap();
        assert_eq!(corpus.len(), 2 * 2 * 3);
        assert_eq!(corpus.iter().filter(|(l, _)| l == "alpha").count(), 6);
        let again = build_corpus(&audios, &tiny_plan(2), &cfg, 3, 11).unwrap();
        assert_eq!(corpus, again);
        let reseeded = build_corpus(&audios, &tiny_plan(2), &cfg, 3, 12).unwrap();
        assert_ne!(corpus, reseeded);
    }

    #[test]
    fn set_schedule_matches_example() {
        let mut totals = BTreeMap::new();
        for l in ["label1", "label2", "label3", "label4"] {
            totals.insert(l.to_string(), 3000);
        }
        let plans = set_label_counts(&totals, 12, 0.55).unwrap();
        assert_eq!(plans.len(), 12);
        let set1 = &plans[0];
        let size: usize = set1.values().sum();
        assert_eq!(size, 1000);
        assert_eq!(set1["label1"], 550);
        assert_eq!(set1["label2"], 150);
        assert_eq!(set1["label3"], 150);
        assert_eq!(set1["label4"], 150);
        // set 12 majors the 4th label, mirroring the schedule wrap-around
        assert_eq!(plans[11]["label4"], 550);
    }

    fn synthetic_corpus(per_label: usize, labels: &[&str]) -> Vec<(String, Tile)> {
        let meta = NormalizationMeta {
            log_epsilon: 1e-10,
            min_log: -1.0,
            max_log: 1.0,
        };
        let mut corpus = Vec::new();
        for (li, label) in labels.iter().enumerate() {
            for i in 0..per_label {
                // payload encodes identity so duplicate detection is easy
                let mut data = vec![0.0f32; TILE_LEN];
                data[0] = li as f32;
                data[1] = i as f32;
                corpus.push((
                    label.to_string(),
                    Tile {
                        data,
                        row_map: (0..192).collect(),
                        meta,
                    },
                ));
            }
        }
        corpus
    }

    #[test]
    fn pure_sets_when_w_major_is_one() {
        let corpus = synthetic_corpus(50, &["a", "b", "c"]);
        let sets = cluster_sets(corpus, 3, 1.0, 9).unwrap();
        for set in &sets {
            assert_eq!(set.source_mix.values().filter(|&&v| v > 0.0).count(), 1);
        }
    }

    #[test]
    fn sets_are_disjoint_and_match_mix() {
        let corpus = synthetic_corpus(600, &["a", "b", "c", "d"]);
        let sets = cluster_sets(corpus, 12, 0.55, 13).unwrap();
        assert_eq!(sets.len(), 12);
        let mut seen = std::collections::HashSet::new();
        for set in &sets {
            assert!(!set.tiles.is_empty());
            let total: f64 = set.source_mix.values().sum();
            assert!((total - 1.0).abs() < 1e-9);
            let major = set.source_mix.values().cloned().fold(0.0_f64, f64::max);
            assert!((major - 0.55).abs() <= 0.02, "major share {major}");
            for tile in &set.tiles {
                let key = (tile.data[0].to_bits(), tile.data[1].to_bits());
                assert!(seen.insert(key), "tile assigned twice: {key:?}");
            }
        }
    }

    #[test]
    fn insufficient_tiles_error_names_label() {
        let corpus = synthetic_corpus(5, &["plenty", "scarce"]);
        // 2 sets of size ~4 with w_major 1.0 draw one label each; deleting
        // most of `scarce` starves its set
        let corpus: Vec<_> = corpus
            .into_iter()
            .filter(|(l, t)| l == "plenty" || t.data[1] < 1.0)
            .collect();
        match cluster_sets(corpus, 2, 1.0, 3) {
            Err(Error::InsufficientTiles { label, .. }) => assert_eq!(label, "scarce"),
            other => panic!("expected InsufficientTiles, got {other:?}"),
        }
    }

    #[test]
    fn manifest_round_trip_and_tile_store() {
        let dir = tempfile::tempdir().unwrap();
        let wav_dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for (i, label) in ["drums", "hiss"].iter().enumerate() {
            let audio = noise_audio(3.0, label, 20 + i as u64);
            let path = wav_dir.path().join(format!("{label}.wav"));
            audio_io::save_wav(&audio, &path).unwrap();
            paths.push(path);
        }
        let cfg = StftConfig::tile_default();
        let manifest = build_corpus_to_dir(&paths, &tiny_plan(2), &cfg, 3, 31, dir.path()).unwrap();
        assert_eq!(manifest.records.len(), 2 * 2 * 3);

        let read_back = read_manifest(dir.path()).unwrap();
        assert_eq!(manifest, read_back);

        let store = TileStore::open(dir.path()).unwrap();
        for record in &store.manifest.records {
            let tile = store.read_tile(record).unwrap();
            let payload = tile_payload(&tile);
            assert_eq!(
                &encode::sha256_hex(&payload)[..16],
                record.sha_prefix.as_str()
            );
            assert!(tile.data.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn streamed_tiles_match_in_memory_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let wav_dir = tempfile::tempdir().unwrap();
        let audio = noise_audio(3.0, "only", 40);
        let path = wav_dir.path().join("only.wav");
        audio_io::save_wav(&audio, &path).unwrap();
        // the wav round trip quantizes to 16 bits, so compare against the
        // decoded audio rather than the original buffer
        let decoded = audio_io::load_wav(&path).unwrap();
        let cfg = StftConfig::tile_default();
        let plan = tiny_plan(3);
        let streamed = build_corpus_to_dir(&[path], &plan, &cfg, 2, 77, dir.path()).unwrap();
        let in_memory = build_corpus(&[decoded], &plan, &cfg, 2, 77).unwrap();
        assert_eq!(streamed.records.len(), in_memory.len());
        let store = TileStore::open(dir.path()).unwrap();
        for (record, (_, tile)) in streamed.records.iter().zip(&in_memory) {
            let from_disk = store.read_tile(record).unwrap();
            assert_eq!(from_disk.data, tile.data);
        }
    }

    #[test]
    fn cluster_manifest_matches_cluster_sets_assignment() {
        let corpus = synthetic_corpus(100, &["a", "b"]);
        let mut manifest = CorpusManifest {
            records: corpus
                .iter()
                .enumerate()
                .map(|(i, (label, _))| TileRecord {
                    tile_id: i as u64,
                    label: label.clone(),
                    set_id: 0,
                    file: "x.bin".into(),
                    offset: (i * TILE_LEN * 4) as u64,
                    sha_prefix: "0".repeat(16),
                })
                .collect(),
            meta: NormalizationMeta {
                log_epsilon: 1e-10,
                min_log: -1.0,
                max_log: 1.0,
            },
        };
        let mixes = cluster_manifest(&mut manifest, 2, 0.75, 55).unwrap();
        assert_eq!(mixes.len(), 2);
        let sets = cluster_sets(corpus, 2, 0.75, 55).unwrap();
        for (set, mix) in sets.iter().zip(&mixes) {
            assert_eq!(&set.source_mix, mix);
            let manifest_count = manifest
                .records
                .iter()
                .filter(|r| r.set_id == set.set_id)
                .count();
            assert_eq!(manifest_count, set.tiles.len());
        }
    }
}
