use std::collections::BTreeMap;
use std::time::Instant;
use cyclospec::dataset::TrainingSet;
use cyclospec::gan::tensor::Tensor;
use cyclospec::gan::{self, ForwardMode, GanConfig, GanModel};
use cyclospec::rng::Rng;
use cyclospec::spectral::{NormalizationMeta, Tile, TILE_CHANNELS, TILE_LEN, TILE_SIZE, TILE_ROWS};

fn striped_tile(period: usize, phase: f64, amp: f64, noise: f64, rng: &mut Rng) -> Tile {
    let mut data = vec![0.0f32; TILE_LEN];
    for c in 0..TILE_CHANNELS {
        for r in 0..TILE_SIZE {
            for t in 0..TILE_SIZE {
                let x = t as f64 / period as f64 * std::f64::consts::TAU + phase;
                let v = amp * x.sin() + noise * rng.normal();
                data[(c * TILE_SIZE + r) * TILE_SIZE + t] = v.clamp(-1.0, 1.0) as f32;
            }
        }
    }
    Tile { data, row_map: (0..TILE_ROWS).collect(), meta: NormalizationMeta { log_epsilon: 1e-10, min_log: -5.0, max_log: 2.0 } }
}

fn tiles(n: usize, seed: u64) -> Vec<Tile> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| {
        let period = 2 + rng.below(7);
        let phase = rng.range_f64(0.0, std::f64::consts::TAU);
        let amp = rng.range_f64(0.5, 0.85);
        striped_tile(period, phase, amp, 0.15, &mut rng)
    }).collect()
}

/// fraction of a tile's column-variation energy at its strongest nonzero
/// column-frequency (stripey tiles concentrate energy)
fn stripe_score(tile: &Tile) -> f64 {
    // mean over rows of channel 0, then DFT magnitude over columns
    let mut col_mean = vec![0.0f64; TILE_SIZE];
    for t in 0..TILE_SIZE {
        for r in 0..TILE_SIZE {
            col_mean[t] += tile.data[r * TILE_SIZE + t] as f64;
        }
        col_mean[t] /= TILE_SIZE as f64;
    }
    let mean: f64 = col_mean.iter().sum::<f64>() / 64.0;
    let mut best = 0.0f64;
    let mut total = 0.0f64;
    for k in 1..32 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, &v) in col_mean.iter().enumerate() {
            let ph = std::f64::consts::TAU * k as f64 * t as f64 / 64.0;
            re += (v - mean) * ph.cos();
            im -= (v - mean) * ph.sin();
        }
        let p = re * re + im * im;
        total += p;
        best = best.max(p);
    }
    if total > 0.0 { best / total } else { 0.0 }
}

fn mixed_accuracy(model: &GanModel<f32>, held: &[Tile], seed: u64) -> f64 {
    let generated = gan::generate_batch(model, held.len(), seed).unwrap();
    // interleave real and fake into one batch so batch-norm statistics are shared
    let mut data = Vec::new();
    for (r, f) in held.iter().zip(&generated) {
        data.extend(r.data.iter().map(|&v| v));
        data.extend(f.data.iter().map(|&v| v));
    }
    let batch = Tensor::from_vec([held.len() * 2, TILE_CHANNELS, TILE_SIZE, TILE_SIZE], data);
    let scores = gan::discriminator_forward(model, &batch, ForwardMode::Train).unwrap();
    let mut correct = 0;
    for i in 0..held.len() {
        if scores[2 * i] > 0.5 { correct += 1; }
        if scores[2 * i + 1] < 0.5 { correct += 1; }
    }
    correct as f64 / (2 * held.len()) as f64
}

fn main() {
    let iters: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let bc: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let seed0: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let t0 = Instant::now();
    let cfg = GanConfig {
        latent_dim: 32, base_channels: bc, batch_size: 16,
        epochs: 1, iterations_per_set: iters, seed: seed0, checkpoint_every: 0,
        ..GanConfig::default()
    };
    let set = TrainingSet { set_id: 1, tiles: tiles(2048, 77), source_mix: BTreeMap::from([("s".into(), 1.0)]) };
    let held = tiles(64, 9999);
    let real_stripe: f64 = held.iter().map(stripe_score).sum::<f64>() / 64.0;
    let mut model: GanModel<f32> = gan::init_model(&cfg).unwrap();
    let init_gen: f64 = gan::generate_batch(&model, 64, 4242).unwrap().iter().map(stripe_score).sum::<f64>() / 64.0;
    println!("real stripe score {real_stripe:.3}; generated init {init_gen:.3}");
    let chunk = 250;
    let mut done = 0;
    while done < iters {
        let mut c = cfg.clone();
        c.iterations_per_set = chunk.min(iters - done);
        c.seed = seed0 + done as u64;
        let h = gan::train(&mut model, std::slice::from_ref(&set), &c, |_, _| Ok(())).unwrap();
        done += chunk.min(iters - done);
        let acc = mixed_accuracy(&model, &held, 4242);
        let stripe: f64 = gan::generate_batch(&model, 64, 4242).unwrap().iter().map(stripe_score).sum::<f64>() / 64.0;
        let last: f64 = h[h.len().saturating_sub(20)..].iter().map(|x| x.gen_loss).sum::<f64>() / 20.0_f64.min(h.len() as f64);
        println!("iter {done}: mixed acc {acc:.3}, stripe {stripe:.3}, gen loss {last:.2}, {:.0}s", t0.elapsed().as_secs_f64());
    }
}
