use amata::*;

// Shared fixture logic copied inline for diagnosis.
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(20);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let kmax: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10);
    let momentum: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.9);
    let batch: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(100);
    let mseed: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(42);
    let warm: bool = args.get(7).map(|s| s == "warm").unwrap_or(false);

    // quick synthetic digits replacement: use blob data? No - need the real fixture.
    // Re-render sevenseg here (same params as tests/common).
    let train = sevenseg(2000, 0xD161);
    let test = sevenseg(1000, 0xD162);

    let spec = MlpSpec::new(vec![784, 256, 128, 10], mseed).unwrap();
    if warm {
        warm_start_probe(&train, &test, lr, momentum, epochs, kmax);
        return;
    }
    let config = TrainConfig {
        epochs,
        batch_size: batch,
        lr,
        momentum,
        weight_decay: 5e-4,
        lr_milestones: args.get(8).map(|s| if s.is_empty() { vec![] } else { s.split(',').map(|v| v.parse().unwrap()).collect() }).unwrap_or_default(),
        lr_decay_factor: 0.3,
        seed: 1234,
        schedule: if args.get(9).map(|s| s == "const").unwrap_or(false) {
            ScheduleSpec::constant(kmax, 0.4, epochs).unwrap()
        } else {
            ScheduleSpec::linear(2, kmax, 0.4, epochs).unwrap()
        },
        eps: 0.3,
        domain_clip: true,
        attack_eval: None,
    };
    let (params, rows) = train_run(&config, &train, &spec);
    for r in &rows {
        println!("ep {:2} K {:2} a {:.3} loss {:.4} clean {:.3} gnorm2 {:.3e}", r.epoch, r.k, r.alpha, r.train_loss, r.clean_acc, r.grad_norm_sq);
    }
    let att = AttackSpec::pgd40(7);
    let rep = evaluate_robust(&params, &test, &att).unwrap();
    println!("TEST clean {:.3} robust {:.3} adv_loss {:.3} clean_loss {:.3}", rep.clean_acc, rep.robust_acc, rep.mean_adv_loss, rep.mean_clean_loss);
}

fn train_run(c: &TrainConfig, d: &Dataset, s: &MlpSpec) -> (Params, Vec<MetricsRow>) {
    amata::train(c, d, s).unwrap()
}

// ERM-pretrain 5 epochs, then hand-rolled adversarial loop, to test whether
// robustness is attainable at all on this data when past the cold start.
fn warm_start_probe(train: &Dataset, test: &Dataset, lr: f64, momentum: f64, epochs: usize, kmax: usize) {
    use rand::{Rng, SeedableRng};
    let spec = MlpSpec::new(vec![784, 256, 128, 10], 42).unwrap();
    let erm = TrainConfig {
        epochs: 5, batch_size: 100, lr: 0.1, momentum: 0.9, weight_decay: 5e-4,
        lr_milestones: vec![], lr_decay_factor: 0.1, seed: 1234,
        schedule: ScheduleSpec::constant(1, 0.4, 5).unwrap(),
        eps: 0.0, domain_clip: true, attack_eval: None,
    };
    let (mut params, _) = amata::train(&erm, train, &spec).unwrap();
    println!("after ERM warmup: clean {:.3}", accuracy(&params, &test.inputs, &test.labels).unwrap());
    let mut velocity = params.zeros_like();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(777);
    let n = train.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let sched = ScheduleSpec::linear(2, kmax, 0.4, epochs).unwrap();
    for ep in 0..epochs {
        let k = sched.steps_at(ep).unwrap();
        let alpha = sched.alpha_at(ep).unwrap();
        for i in (1..n).rev() { let j = rng.random_range(0..=i); indices.swap(i, j); }
        let mut lsum = 0.0;
        for chunk in indices.chunks(100) {
            let x0 = train.inputs.gather_rows(chunk).unwrap();
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let b = AdvBatch::new(x0, y, 0.3).unwrap();
            let out = pgd_perturb(&params, &b, alpha, k, PgdInit::Clean).unwrap();
            let (loss, g) = loss_and_grads(&params, out.batch.x(), out.batch.labels(), Wrt::ParamsOnly).unwrap();
            lsum += loss * chunk.len() as f64;
            sgd_step(&mut params, &g.params.unwrap(), &mut velocity, lr, momentum, 5e-4).unwrap();
        }
        let clean = accuracy(&params, &test.inputs, &test.labels).unwrap();
        println!("adv ep {:2} K {:2} loss {:.4} test-clean {:.3}", ep, k, lsum / n as f64, clean);
    }
    let att = AttackSpec::pgd40(7);
    let rep = evaluate_robust(&params, test, &att).unwrap();
    println!("WARM TEST clean {:.3} robust {:.3}", rep.clean_acc, rep.robust_acc);
}

fn sevenseg(n: usize, seed: u64) -> Dataset {
    use rand::{Rng, SeedableRng};
    let segs: [(usize, usize, usize, usize); 7] = [
        (3, 8, 8, 20), (4, 14, 16, 21), (14, 24, 16, 21), (20, 25, 8, 20),
        (14, 24, 7, 12), (4, 14, 7, 12), (12, 16, 8, 20),
    ];
    let digseg: [&[usize]; 10] = [
        &[0,1,2,3,4,5], &[1,2], &[0,1,6,4,3], &[0,1,6,2,3], &[5,6,1,2],
        &[0,5,6,2,3], &[0,5,6,4,3,2], &[0,1,2], &[0,1,2,3,4,5,6], &[0,1,2,3,5,6],
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n*784);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = i % 10;
        let mut canvas = vec![0.0f64; 784];
        let dy = rng.random_range(-1i32..=1);
        let dx = rng.random_range(-2i32..=2);
        for &sg in digseg[digit] {
            let (r0, r1, c0, c1) = segs[sg];
            let inten = 0.95 + 0.05 * rng.random::<f64>();
            for r in r0..r1 { for c in c0..c1 {
                let rr = r as i32 + dy; let cc = c as i32 + dx;
                if (0..28).contains(&rr) && (0..28).contains(&cc) {
                    let idx = rr as usize * 28 + cc as usize;
                    canvas[idx] = canvas[idx].max(inten);
                }
            }}
        }
        for v in canvas.iter_mut() { *v = (*v + 0.03 * rng.random::<f64>()).clamp(0.0, 1.0); }
        data.extend_from_slice(&canvas);
        labels.push(digit);
    }
    Dataset::new(Tensor::from_vec(vec![n, 784], data).unwrap(), labels, 10).unwrap()
}
