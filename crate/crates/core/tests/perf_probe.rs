// Temporary throughput probe; removed once kernel performance is confirmed.

use fedwave::diffcore::kernels::LstmSaved;
use fedwave::diffcore::{kernels, Graph, NdArray};
use std::time::Instant;

#[test]
#[ignore]
fn lstm_training_throughput() {
    let (steps, batch, hidden) = (1000usize, 32usize, 50usize);
    let g4 = 4 * hidden;

    // Layer-2-like config: input = hidden.
    let x = NdArray::full(vec![steps, batch, hidden], 0.1);
    let w_ih = NdArray::full(vec![hidden, g4], 0.01);
    let w_hh = NdArray::full(vec![hidden, g4], 0.01);
    let bias = NdArray::zeros(vec![g4]);

    // Raw kernel forward.
    let mut h = vec![0.0; steps * batch * hidden];
    let mut saved = LstmSaved::zeros(steps, batch, hidden);
    let _ = g4;
    let t0 = Instant::now();
    kernels::lstm_forward(
        x.data(),
        w_ih.data(),
        w_hh.data(),
        bias.data(),
        steps,
        batch,
        hidden,
        hidden,
        &mut h,
        Some(&mut saved),
    );
    let fwd = t0.elapsed();
    // macs per step: B*(H*4H + H*4H) = 32*(10000+10000)*... : 2*B*H*4H
    let macs = (2 * batch * hidden * g4 * steps) as f64;
    eprintln!(
        "lstm fwd: {:?} -> {:.2} Gmacs/s",
        fwd,
        macs / fwd.as_secs_f64() / 1e9
    );

    // Full graph fwd+bwd.
    let t1 = Instant::now();
    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let wi = g.param(w_ih.clone());
    let wh = g.param(w_hh.clone());
    let bi = g.param(bias.clone());
    let out = g.lstm_layer(xi, wi, wh, bi).unwrap();
    let flat = g
        .reshape(out, vec![steps * batch, hidden])
        .unwrap();
    let pw = g.param(NdArray::full(vec![hidden, 1], 0.02));
    let z = g.matmul(flat, pw).unwrap();
    let zz = g.reshape(z, vec![steps * batch]).unwrap();
    let target = g.input(NdArray::zeros(vec![steps * batch]));
    let loss = g.mse_loss(zz, target).unwrap();
    let built = t1.elapsed();
    let t2 = Instant::now();
    let grads = g.backward(loss).unwrap();
    let bwd = t2.elapsed();
    assert!(grads.get(wi).is_some());
    eprintln!(
        "graph fwd {:?} ({:.2} Gmacs/s), bwd {:?} ({:.2} Gmacs/s assuming 2x fwd macs)",
        built,
        macs / built.as_secs_f64() / 1e9,
        bwd,
        2.0 * macs / bwd.as_secs_f64() / 1e9
    );
}

#[test]
#[ignore]
fn lstm_component_breakdown() {
    use fedwave::diffcore::kernels::{add_bias_rows, mm, mm_acc, sigmoid};
    let (steps, batch, hidden) = (1000usize, 32usize, 50usize);
    let g4 = 4 * hidden;
    let x = vec![0.1; batch * hidden];
    let w_ih = vec![0.01; hidden * g4];
    let w_hh = vec![0.01; hidden * g4];
    let bias = vec![0.0; g4];
    let mut gates = vec![0.0; batch * g4];
    let mut h_prev = vec![0.05; batch * hidden];
    let mut c_prev = vec![0.02; batch * hidden];

    let t0 = Instant::now();
    for _ in 0..steps {
        mm(&x, &w_ih, batch, hidden, g4, &mut gates);
        mm_acc(&h_prev, &w_hh, batch, hidden, g4, &mut gates);
        add_bias_rows(&mut gates, &bias, batch);
    }
    let mm_time = t0.elapsed();

    let t1 = Instant::now();
    for _ in 0..steps {
        for b in 0..batch {
            let g_row = &mut gates[b * g4..][..g4];
            for j in 0..hidden {
                let i_g = sigmoid(g_row[j]);
                let f_g = sigmoid(g_row[hidden + j]);
                let g_g = g_row[2 * hidden + j].tanh();
                let o_g = sigmoid(g_row[3 * hidden + j]);
                let c = f_g * c_prev[b * hidden + j] + i_g * g_g;
                h_prev[b * hidden + j] = o_g * c.tanh();
                c_prev[b * hidden + j] = c;
                g_row[j] = i_g;
                g_row[hidden + j] = f_g;
                g_row[2 * hidden + j] = g_g;
                g_row[3 * hidden + j] = o_g;
            }
        }
    }
    let cell_time = t1.elapsed();
    eprintln!("mm part: {:?}, cell part: {:?} (h={})", mm_time, cell_time, h_prev[0]);
}

#[test]
#[ignore]
fn mm_shapes_throughput() {
    use fedwave::diffcore::kernels::{mm, mm_acc, mm_at_acc, mm_bt_acc};
    // Big input-projection shape.
    let (m, k, n) = (32000, 50, 200);
    let a = vec![0.5; m * k];
    let b = vec![0.25; k * n];
    let mut out = vec![0.0; m * n];
    let t = Instant::now();
    mm(&a, &b, m, k, n, &mut out);
    let el = t.elapsed();
    eprintln!("mm[32000,50x200]: {:?} -> {:.2} Gmacs/s", el, (m * k * n) as f64 / el.as_secs_f64() / 1e9);

    // Recurrent step shape, repeated.
    let (m2, k2, n2) = (32, 50, 200);
    let a2 = vec![0.5; m2 * k2];
    let b2 = vec![0.25; k2 * n2];
    let mut out2 = vec![0.0; m2 * n2];
    let t = Instant::now();
    for _ in 0..1000 {
        mm_acc(&a2, &b2, m2, k2, n2, &mut out2);
    }
    let el = t.elapsed();
    eprintln!("mm_acc[32,50x200]x1000: {:?} -> {:.2} Gmacs/s", el, (1000 * m2 * k2 * n2) as f64 / el.as_secs_f64() / 1e9);

    // Backward contraction shapes.
    let dg = vec![0.1; 32000 * 200];
    let mut dwi = vec![0.0; 50 * 200];
    let t = Instant::now();
    mm_at_acc(&a, &dg, 32000, 50, 200, &mut dwi);
    let el = t.elapsed();
    eprintln!("mm_at[32000^T 50x200]: {:?} -> {:.2} Gmacs/s", el, (32000usize * 50 * 200) as f64 / el.as_secs_f64() / 1e9);

    let wih = vec![0.1; 50 * 200];
    let mut dx = vec![0.0; 32000 * 50];
    let t = Instant::now();
    mm_bt_acc(&dg, &wih, 32000, 200, 50, &mut dx);
    let el = t.elapsed();
    eprintln!("mm_bt[32000,200x50]: {:?} -> {:.2} Gmacs/s", el, (32000usize * 200 * 50) as f64 / el.as_secs_f64() / 1e9);
}

#[test]
#[ignore]
fn full_batch_step_timing() {
    use fedwave::nets::init_bundle;
    use fedwave::signal::synth_paired_dataset;
    use fedwave::training::{discriminator_step, generator_step, TrainHyper};

    let d = synth_paired_dataset(32, 1, 100.0).unwrap();
    let pairs = d.to_segment_pairs();
    let ppg: Vec<&[f64]> = pairs.iter().map(|p| p.ppg.as_slice()).collect();
    let abp: Vec<&[f64]> = pairs.iter().map(|p| p.abp.as_slice()).collect();
    let mut bundle = init_bundle(5);
    let hyper = TrainHyper::default();

    // Warm up.
    discriminator_step(&mut bundle, &ppg, &abp, &hyper).unwrap();

    let t0 = Instant::now();
    discriminator_step(&mut bundle, &ppg, &abp, &hyper).unwrap();
    let d_time = t0.elapsed();
    let t1 = Instant::now();
    generator_step(&mut bundle, &ppg, &abp, &hyper).unwrap();
    let g_time = t1.elapsed();
    eprintln!("disc step: {d_time:?}, gen step: {g_time:?}, per-batch {:?}", d_time + g_time);
    eprintln!(
        "projected c9: {} batches x {:?} = {:.1} min / 2 cores = {:.1} min",
        1200,
        d_time + g_time,
        1200.0 * (d_time + g_time).as_secs_f64() / 60.0,
        1200.0 * (d_time + g_time).as_secs_f64() / 120.0
    );
}

#[test]
#[ignore]
fn conv_layer_timing() {
    use fedwave::diffcore::kernels::{conv1d_backward, conv1d_forward};
    let shapes = [
        (32usize, 1usize, 1000usize, 16usize),
        (32, 16, 500, 32),
        (32, 32, 250, 64),
        (32, 64, 125, 128),
    ];
    for (b, cin, len, cout) in shapes {
        let x = vec![0.3; b * cin * len];
        let w = vec![0.05; cout * cin * 5];
        let out_len = len;
        let mut out = vec![0.0; b * cout * out_len];
        let t0 = Instant::now();
        conv1d_forward(&x, &w, b, cin, len, cout, 5, 1, 2, &mut out);
        let f = t0.elapsed();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let t1 = Instant::now();
        conv1d_backward(&x, &w, &out, b, cin, len, cout, 5, 1, 2, Some(&mut dx), Some(&mut dw));
        let bwd = t1.elapsed();
        let macs = (b * cout * out_len * cin * 5) as f64;
        eprintln!(
            "conv b{b} c{cin}->{cout} L{len}: fwd {f:?} ({:.2} G/s), bwd {bwd:?} ({:.2} G/s)",
            macs / f.as_secs_f64() / 1e9,
            2.0 * macs / bwd.as_secs_f64() / 1e9
        );
    }
}

#[test]
#[ignore]
fn gen_step_phase_timing() {
    use fedwave::diffcore::{Graph, NdArray};
    use fedwave::nets::{self, init_bundle};
    use fedwave::signal::synth_paired_dataset;

    let d = synth_paired_dataset(32, 1, 100.0).unwrap();
    let pairs = d.to_segment_pairs();
    let ppg: Vec<&[f64]> = pairs.iter().map(|p| p.ppg.as_slice()).collect();
    let bundle = init_bundle(5);
    let batch = 32;

    // Allocation probe.
    let t0 = Instant::now();
    let mut keep = 0.0;
    for _ in 0..12 {
        let v = vec![0.0f64; 6_400_000];
        keep += v[12345];
    }
    eprintln!("12x 51MB vec alloc+zero: {:?} (keep {keep})", t0.elapsed());

    // Single taped pair forward.
    let t1 = Instant::now();
    let mut g = Graph::new();
    let gpa = nets::register_generator(&mut g, &bundle.g_pa, true);
    let x = g.input(nets::time_major(&ppg));
    let y = nets::build_generator(&mut g, &gpa, x, batch).unwrap();
    let fwd = t1.elapsed();

    // L1 loss + backward.
    let tgt = g.reshape(x, vec![1000, batch]).unwrap();
    let loss = g.l1_loss(y, tgt).unwrap();
    let t2 = Instant::now();
    let grads = g.backward(loss).unwrap();
    let bwd = t2.elapsed();
    assert!(grads.get(gpa.ids[0]).is_some());
    eprintln!("taped pair fwd: {fwd:?}, bwd: {bwd:?}");
}

#[test]
#[ignore]
fn vmath_throughput() {
    use fedwave::diffcore::vmath::{sigmoid_slice, tanh_slice};
    let mut x: Vec<f64> = (0..6_400_000).map(|i| (i as f64 * 0.001).sin() * 3.0).collect();
    let t0 = Instant::now();
    sigmoid_slice(&mut x);
    let s = t0.elapsed();
    let t1 = Instant::now();
    tanh_slice(&mut x);
    let t = t1.elapsed();
    eprintln!(
        "sigmoid 6.4M: {s:?} ({:.2} ns/el), tanh 6.4M: {t:?} ({:.2} ns/el), sum {}",
        s.as_nanos() as f64 / 6.4e6,
        t.as_nanos() as f64 / 6.4e6,
        x[777]
    );
}

#[test]
#[ignore]
fn vmath_cached_throughput() {
    use fedwave::diffcore::vmath::sigmoid_slice;
    // Step-buffer sized: [32, 200] = 6400 els, repeated 1000x.
    let mut x: Vec<f64> = (0..6400).map(|i| (i as f64 * 0.01).sin() * 3.0).collect();
    let t0 = Instant::now();
    for _ in 0..1000 {
        sigmoid_slice(&mut x);
    }
    let s = t0.elapsed();
    eprintln!(
        "sigmoid 6.4M cached: {s:?} ({:.2} ns/el) v={}",
        s.as_nanos() as f64 / 6.4e6,
        x[3]
    );
}
