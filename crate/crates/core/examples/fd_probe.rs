use std::time::Instant;
use cyclospec::gan::tensor::Tensor;
use cyclospec::gan::{self, GanConfig, GanModel};
use cyclospec::rng::Rng;

fn gen_forward_from(model: &GanModel<f64>, from: usize, input: &Tensor<f64>) -> Tensor<f64> {
    let mut x = input.clone();
    for stage in &model.gen.stages[from..] {
        let pre = stage.deconv.forward(&x);
        let bn_out = match &stage.bn {
            Some(bn) => bn.forward_train(&pre).0,
            None => pre,
        };
        x = stage.act.forward(&bn_out);
    }
    x
}

fn disc_forward_from(model: &GanModel<f64>, from: usize, input: &Tensor<f64>) -> Vec<f64> {
    let mut x = input.clone();
    for stage in &model.disc.stages[from..] {
        let pre = stage.conv.forward(&x);
        let bn_out = match &stage.bn {
            Some(bn) => bn.forward_train(&pre).0,
            None => pre,
        };
        x = stage.act.forward(&bn_out);
    }
    x.data
}

fn main() {
    let cfg = GanConfig {
        latent_dim: 4,
        base_channels: 4,
        batch_size: 2,
        seed: 1,
        ..GanConfig::default()
    };
    let model: GanModel<f64> = gan::init_model(&cfg).unwrap();
    let mut rng = Rng::new(5);
    let z = gan::latent_batch::<f64>(2, cfg.latent_dim, &mut rng);
    let n = 200;

    // gen eval from stage 1 (the dominant cost: 8224 of 13118 gen params)
    let x1 = {
        let mut x = z.clone();
        let stage = &model.gen.stages[0];
        let pre = stage.deconv.forward(&x);
        x = stage.act.forward(&model.gen.stages[0].bn.as_ref().unwrap().forward_train(&pre).0);
        x
    };
    let t0 = Instant::now();
    for _ in 0..n {
        let fake = gen_forward_from(&model, 1, &x1);
        let _ = disc_forward_from(&model, 0, &fake);
    }
    println!("gen-from-1 + disc eval: {:.2} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);

    let fake = gen_forward_from(&model, 0, &z);
    let t0 = Instant::now();
    for _ in 0..n {
        let _ = disc_forward_from(&model, 0, &fake);
    }
    println!("disc-from-0 eval: {:.3} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);
}
