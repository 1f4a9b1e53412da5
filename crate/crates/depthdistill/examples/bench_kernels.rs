use depthdistill::tensor::{ops, Rng, Tape, Tensor};
use std::time::Instant;

fn main() {
    let mut rng = Rng::new(1);
    // matmul flops check: typical conv-as-matmul shape
    for &(m, k, n) in &[(64usize, 80 * 9, 576usize), (128, 128 * 9, 144), (576, 32, 576)] {
        let a = Tensor::<f32>::randn([m, k], 1.0, &mut rng);
        let b = Tensor::<f32>::randn([k, n], 1.0, &mut rng);
        let tape = Tape::inference();
        let t0 = Instant::now();
        let iters = 200;
        for _ in 0..iters {
            let _ = ops::matmul(&tape, &a, &b).unwrap();
        }
        let dt = t0.elapsed().as_secs_f64();
        let gflops = (2.0 * m as f64 * k as f64 * n as f64 * iters as f64) / dt / 1e9;
        println!("matmul {m}x{k}x{n}: {gflops:.2} GFLOP/s");
    }
    // conv fwd+bwd: decoder-like layer, batch 8
    let x = Tensor::<f32>::randn([8, 80, 24, 24], 1.0, &mut rng).requires_grad_(true);
    let w = Tensor::<f32>::randn([64, 80, 3, 3], 0.05, &mut rng).requires_grad_(true);
    let bsz = Tensor::<f32>::zeros([64]).requires_grad_(true);
    let t0 = Instant::now();
    let iters = 20;
    for _ in 0..iters {
        let tape = Tape::new();
        let y = ops::conv2d(&tape, &x, &w, Some(&bsz), 1, 1).unwrap();
        let loss = ops::sum_all(&tape, &y).unwrap();
        tape.backward(&loss).unwrap();
        x.zero_grad(); w.zero_grad(); bsz.zero_grad();
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    let macs = 8.0 * 64.0 * 80.0 * 9.0 * 576.0 * 3.0; // fwd + dW + dX
    println!("conv2d fwd+bwd batch8 80->64@24x24: {:.1} ms/iter, {:.2} GFLOP/s", dt * 1e3, 2.0 * macs / dt / 1e9);
}
