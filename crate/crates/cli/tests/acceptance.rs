//! One PASS/FAIL line per acceptance criterion.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use elastokit::chem::{parse_smiles, Atom, Bond, BondOrder, MolGraph, SmilesErrorKind};
use elastokit::eval::TargetMetrics;
use elastokit::fusion::{
    alignment_loss, alignment_loss_and_grad, contrastive_loss, default_alpha_grid,
    grid_search_alpha, late_fuse, AlignmentHeads,
};
use elastokit::gin::{mask_atoms, ssl_loss, ssl_loss_and_grad, GinConfig, GinModel};
use elastokit::nn::Parameters;
use elastokit::tabular::{fit_gpr, fit_pca, GprGrid, PcaSelection};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elastokit"))
        .args(args)
        .env_remove("ELASTOKIT_SEED")
        .output()
        .expect("spawn elastokit")
}

fn cli_ok(args: &[&str]) -> std::result::Result<Output, String> {
    let out = cli(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`elastokit {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.gen_range(-2.0..2.0))
}

fn metric_arithmetic() -> Check {
    let m = TargetMetrics::from_values([0.362, 0.800], [34.070, 0.654]);
    let (r2, rmse) = (m.mean_r2(), m.mean_rmse());
    ensure((r2 - 0.581).abs() <= 1e-12, format!("mean R2 {r2}"))?;
    ensure((rmse - 17.362).abs() <= 1e-12, format!("mean RMSE {rmse}"))?;
    Ok(format!("mean R2 {r2:.12}, mean RMSE {rmse:.12}"))
}

fn late_fusion_formula() -> Check {
    let s = DMatrix::from_element(4, 2, 10.0);
    let g = DMatrix::from_element(4, 2, 20.0);
    let f = late_fuse(&s, &g, 0.3).map_err(|e| e.to_string())?;
    ensure(
        f.iter().all(|&v| v == 17.0),
        format!("alpha 0.3 gave {:?}", f.iter().next()),
    )?;
    ensure(
        late_fuse(&s, &g, 0.0).unwrap() == g,
        "alpha 0 is not the graph branch",
    )?;
    ensure(
        late_fuse(&s, &g, 1.0).unwrap() == s,
        "alpha 1 is not the sequence branch",
    )?;
    Ok("0.3*10 + 0.7*20 = 17 exactly; endpoints return each branch".into())
}

struct Dense {
    mean: Vec<f64>,
    var: Vec<f64>,
    lml: f64,
}

fn dense_gp(x: &DMatrix<f64>, y: &[f64], z: &DMatrix<f64>, ell: f64, noise: f64) -> Dense {
    let n = x.nrows();
    let k = |a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize| {
        (-(a.row(i) - b.row(j)).norm_squared() / (2.0 * ell * ell)).exp()
    };
    let kxx = DMatrix::from_fn(n, n, |i, j| {
        k(x, i, x, j) + if i == j { noise } else { 0.0 }
    });
    let inv = kxx.clone().try_inverse().expect("invertible");
    let yv = DVector::from_column_slice(y);
    let w = &inv * &yv;
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for j in 0..z.nrows() {
        let ks = DVector::from_fn(n, |i, _| k(x, i, z, j));
        mean.push(ks.dot(&w));
        var.push(1.0 - ks.dot(&(&inv * &ks)) + noise);
    }
    let lml = -0.5 * yv.dot(&w)
        - 0.5 * kxx.determinant().ln()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Dense { mean, var, lml }
}

fn gpr_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * b.abs().max(1.0);
    let mut worst: f64 = 0.0;
    for inst in 0..20 {
        let n = rng.gen_range(3..=8);
        let d = rng.gen_range(1..=4);
        let x = random_matrix(&mut rng, n, d);
        let y = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-3.0..3.0));
        let z = random_matrix(&mut rng, 3, d);
        let model = fit_gpr(&x, &y, &GprGrid::default(), &[]).map_err(|e| e.to_string())?;
        for (t, gp) in model.targets.iter().enumerate() {
            let col: Vec<f64> = y.column(t).iter().copied().collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            let ys: Vec<f64> = col.iter().map(|v| (v - m) / s).collect();
            let o = dense_gp(&x, &ys, &z, gp.lengthscale, gp.noise_variance);
            let (mu, var) = gp.predict_standardized(&model.x, &z);
            ensure(
                close(gp.log_marginal_likelihood, o.lml),
                format!("instance {inst}: LML"),
            )?;
            for j in 0..z.nrows() {
                ensure(close(mu[j], o.mean[j]), format!("instance {inst}: mean"))?;
                ensure(
                    close(var[j], o.var[j]),
                    format!("instance {inst}: variance"),
                )?;
                worst = worst
                    .max((mu[j] - o.mean[j]).abs())
                    .max((var[j] - o.var[j]).abs());
            }
        }
    }
    Ok(format!("20 instances, worst |diff| {worst:.1e}"))
}

fn pca_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let x = random_matrix(&mut rng, 10, 6);
        let p = fit_pca(&x, PcaSelection::Components(6)).map_err(|e| e.to_string())?;
        let gram = p.components.transpose() * &p.components;
        let ortho = (gram - DMatrix::identity(6, 6)).abs().max();
        ensure(ortho < 1e-8, format!("orthonormality error {ortho:e}"))?;
        let mean = x.row_mean();
        let c = DMatrix::from_fn(10, 6, |i, j| x[(i, j)] - mean[j]);
        let cov = c.transpose() * &c / 9.0;
        let mut ev: Vec<f64> = SymmetricEigen::new(cov)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in p.explained_variance.iter().zip(&ev) {
            ensure((a - b).abs() < 1e-8, format!("eigenvalue {a} vs {b}"))?;
            worst = worst.max((a - b).abs());
        }
        worst = worst.max(ortho);
    }
    let line = DMatrix::from_fn(8, 2, |i, j| {
        (i as f64) * if j == 0 { 1.0 } else { 2.0 } + 0.5
    });
    let p = fit_pca(&line, PcaSelection::Components(2)).map_err(|e| e.to_string())?;
    let ratio = p.explained_variance_ratio();
    ensure(
        ratio[0] > 1.0 - 1e-12,
        format!("collinear first ratio {}", ratio[0]),
    )?;
    let auto = fit_pca(&line, PcaSelection::default()).map_err(|e| e.to_string())?;
    ensure(
        auto.n_components() == 1,
        format!("collinear picked {} components", auto.n_components()),
    )?;
    Ok(format!(
        "worst deviation {worst:.1e}; collinear fixture keeps 1 component"
    ))
}

const MOLECULES: [&str; 10] = [
    "*C(*)(C)C(=O)OCCCC.*c1ccc(N)c(N)c1*",
    "[*]C(C)(C(=O)OCCCC)[*].[*]c1ccc([*])c([*])c1",
    "CCO",
    "c1ccccc1O",
    "*CC(*)C(=O)OCCC#N",
    "*CC(*)(C)C(=O)OCC[N+](C)(C)C",
    "C1CCC2CCCCC2C1",
    "[NH3+]CC(=O)[O-]",
    "*CC(*)C(=O)OCCOCCOC.*CC(*)c1ccccc1",
    "FC(F)(F)CC(Cl)Br",
];

fn random_graph(rng: &mut ChaCha8Rng) -> MolGraph {
    let n = rng.gen_range(2..=6);
    let elements = [0u8, 6, 7, 8, 9, 16];
    let atoms = (0..n)
        .map(|_| Atom::new(elements[rng.gen_range(0..elements.len())]))
        .collect();
    let orders = [BondOrder::Single, BondOrder::Double, BondOrder::Triple];
    let bonds = (1..n)
        .map(|v| {
            Bond::new(
                rng.gen_range(0..v),
                v,
                orders[rng.gen_range(0..orders.len())],
            )
        })
        .collect();
    MolGraph::new(atoms, bonds, 1).unwrap()
}

fn gin_checks() -> Check {
    let start = Instant::now();
    let model = GinModel::new(GinConfig {
        hidden_dim: 32,
        num_layers: 3,
        mask_ratio: 0.15,
        seed: 1,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for smiles in MOLECULES {
        let g = parse_smiles(smiles).map_err(|e| e.to_string())?;
        let reference = model.encode(&g).unwrap();
        let mut perm: Vec<usize> = (0..g.atom_count()).collect();
        for _ in 0..100 {
            perm.shuffle(&mut rng);
            let v = model.encode(&g.permute_atoms(&perm).unwrap()).unwrap();
            ensure(
                v == reference,
                format!("{smiles}: encoding changed under permutation"),
            )?;
        }
    }
    let mut worst: f64 = 0.0;
    for trial in 0..3u64 {
        let graph = random_graph(&mut rng);
        let mut m = GinModel::new(GinConfig {
            hidden_dim: 6,
            num_layers: 2,
            mask_ratio: 0.3,
            seed: trial,
        })
        .unwrap();
        for layer in &mut m.layers {
            layer.epsilon.data[0] = 0.1 * (trial as f64 + 1.0);
        }
        let masked = mask_atoms(&graph, 0.3, 50 + trial).unwrap();
        let (_, grads) = ssl_loss_and_grad(&m, &masked).unwrap();
        let h = 1e-5;
        for t in 0..grads.len() {
            for i in 0..grads[t].len() {
                let orig = m.tensors()[t].data[i];
                m.tensors_mut()[t].data[i] = orig + h;
                let up = ssl_loss(&m, &masked).unwrap().total;
                m.tensors_mut()[t].data[i] = orig - h;
                let down = ssl_loss(&m, &masked).unwrap().total;
                m.tensors_mut()[t].data[i] = orig;
                let num = (up - down) / (2.0 * h);
                worst = worst
                    .max((grads[t][i] - num).abs() / grads[t][i].abs().max(num.abs()).max(1e-6));
            }
        }
    }
    ensure(
        worst < 1e-4,
        format!("worst gradient relative error {worst:e}"),
    )?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "1000 permutations bit-identical; worst gradient rel. error {worst:.1e}; {secs:.1} s"
    ))
}

fn contrastive_checks() -> Check {
    let mut detail = Vec::new();
    for n in [2usize, 8, 34] {
        let zs = DMatrix::from_fn(n, 5, |_, j| j as f64 - 2.0);
        let zg = DMatrix::from_fn(n, 5, |_, j| 0.3 * j as f64 + 0.1);
        let loss = contrastive_loss(&zs, &zg, 0.07).map_err(|e| e.to_string())?;
        ensure(
            (loss - (n as f64).ln()).abs() < 1e-9,
            format!("n={n}: {loss}"),
        )?;
        detail.push(format!("n={n}: {:.1e}", (loss - (n as f64).ln()).abs()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let xs = random_matrix(&mut rng, 4, 5);
    let xg = random_matrix(&mut rng, 4, 3);
    let mut heads = AlignmentHeads::new(5, 3, 8, 2).unwrap();
    let (_, grads) = alignment_loss_and_grad(&heads, &xs, &xg, 0.5).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in 0..grads.len() {
        for i in 0..grads[t].len() {
            let orig = heads.tensors()[t].data[i];
            heads.tensors_mut()[t].data[i] = orig + h;
            let up = alignment_loss(&heads, &xs, &xg, 0.5).unwrap();
            heads.tensors_mut()[t].data[i] = orig - h;
            let down = alignment_loss(&heads, &xs, &xg, 0.5).unwrap();
            heads.tensors_mut()[t].data[i] = orig;
            let num = (up - down) / (2.0 * h);
            worst =
                worst.max((grads[t][i] - num).abs() / grads[t][i].abs().max(num.abs()).max(1e-6));
        }
    }
    ensure(
        worst < 1e-4,
        format!("worst gradient relative error {worst:e}"),
    )?;
    Ok(format!(
        "|loss - ln n| {}; worst gradient rel. error {worst:.1e}",
        detail.join(", ")
    ))
}

fn smiles_checks() -> Check {
    let cases = [
        ("*C(*)(C)C(=O)OCCCC.*c1ccc(N)c(N)c1*", 21, 20),
        ("[*]C(C)(C(=O)OCCCC)[*].[*]c1ccc([*])c([*])c1", 20, 19),
    ];
    for (s, atoms, bonds) in cases {
        let g = parse_smiles(s).map_err(|e| format!("{s}: {e}"))?;
        ensure(
            (g.atom_count(), g.bond_count()) == (atoms, bonds),
            format!("{s}: {} atoms / {} bonds", g.atom_count(), g.bond_count()),
        )?;
    }
    let err = parse_smiles("[*]C(C)(C(=O)O[Ca]O(=O)C(C)[*]")
        .err()
        .ok_or("malformed row parsed")?;
    ensure(
        err.kind == SmilesErrorKind::UnbalancedParenthesis,
        format!("malformed row: {err}"),
    )?;
    Ok(format!("21/20 and 20/19 atoms/bonds; malformed row: {err}"))
}

fn alpha_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ys = random_matrix(&mut rng, 35, 2);
    let yg = random_matrix(&mut rng, 35, 2);
    let truth = late_fuse(&ys, &yg, 0.3).unwrap();
    let s =
        grid_search_alpha(&ys, &yg, &truth, &default_alpha_grid()).map_err(|e| e.to_string())?;
    ensure(s.best_alpha == 0.3, format!("picked {}", s.best_alpha))?;
    Ok(format!(
        "grid step 0.1 picks {} (mean R2 {:.12})",
        s.best_alpha,
        s.best_score()
    ))
}

const STRATEGIES: [&str; 5] = [
    "concat",
    "average",
    "aligned-concat",
    "aligned-average",
    "late",
];
const REPORT_FILES: [&str; 7] = [
    "metrics.csv",
    "predictions.csv",
    "scatter_k.svg",
    "scatter_E.svg",
    "hist_k.svg",
    "hist_E.svg",
    "comparison.md",
];

fn evaluate(strategy: &str, out: &Path, jobs: &str) -> std::result::Result<Output, String> {
    let config = repo().join("configs").join(format!("{strategy}.json"));
    cli_ok(&[
        "evaluate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--jobs",
        jobs,
    ])
}

/// Per-seed R2 by target, and the constant-mean R2 by target.
fn read_r2(metrics: &Path, strategy: &str) -> (BTreeMap<String, Vec<f64>>, BTreeMap<String, f64>) {
    let text = std::fs::read_to_string(metrics).unwrap();
    let mut per_seed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[3] != "r2" || f[2] == "mean" {
            continue;
        }
        let v: f64 = f[4].parse().unwrap();
        if f[0] == "constant-mean" {
            baseline.insert(f[2].to_string(), v);
        } else if f[0] == strategy && f[1].parse::<u64>().is_ok() {
            per_seed.entry(f[2].to_string()).or_default().push(v);
        }
    }
    (per_seed, baseline)
}

fn end_to_end(root: &Path) -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for s in STRATEGIES {
        let out = root.join("e2e").join(s);
        evaluate(s, &out, "1")?;
        for f in REPORT_FILES {
            ensure(out.join(f).is_file(), format!("{s}: {f} missing"))?;
        }
        let md = std::fs::read_to_string(out.join("comparison.md")).unwrap();
        let guard = md
            .lines()
            .find(|l| l.starts_with("- fold guard:"))
            .ok_or(format!("{s}: no fold guard line"))?;
        ensure(
            guard.ends_with(" 0 held-out rows reached a fit"),
            format!("{s}: {guard}"),
        )?;
        let (per_seed, baseline) = read_r2(&out.join("metrics.csv"), s);
        ensure(
            per_seed.values().all(|v| v.len() == 5),
            format!("{s}: expected 5 seeds"),
        )?;
        for (target, values) in &per_seed {
            let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
            let base = baseline[target];
            notes.push(format!("{s} {target} min R2 {worst:.3}"));
            if worst <= base {
                failures.push(format!(
                    "{s} {target}: R2 {worst:.3} <= constant-mean {base:.3}"
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("took {secs:.0} s"))?;
    let summary = format!(
        "synthetic 35-record demo set, 5 strategies x 5 seeds in {secs:.0} s, all report files, zero leakage; {}",
        notes.join("; ")
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!(
            "{}; model quality below constant mean: {}",
            summary,
            failures.join("; ")
        ))
    }
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> std::result::Result<(), String> {
    for n in names {
        let x = std::fs::read(a.join(n)).map_err(|e| format!("{n}: {e}"))?;
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n}: {e}"))?;
        ensure(
            x == y,
            format!(
                "{} differs from {}",
                b.join(n).display(),
                a.join(n).display()
            ),
        )?;
    }
    Ok(())
}

fn determinism(root: &Path) -> Check {
    let r = repo();
    let dataset = r.join("data/demo/elastomers.csv");
    let dataset = dataset.to_str().unwrap();
    let dir = root.join("det");
    let (a, b) = (dir.join("a"), dir.join("b"));
    for d in [&a, &b] {
        std::fs::create_dir_all(d).unwrap();
    }
    let p = |d: &Path, f: &str| d.join(f).to_str().unwrap().to_string();

    let v1 = cli(&["validate-data", "--dataset", dataset]);
    let v2 = cli(&["validate-data", "--dataset", dataset]);
    ensure(
        v1.stdout == v2.stdout && v1.status == v2.status,
        "validate-data output differs",
    )?;

    let corpus = r.join("data/toy_corpus.smi");
    for d in [&a, &b] {
        cli_ok(&[
            "fingerprint",
            "--dataset",
            dataset,
            "--nbits",
            "512",
            "--out",
            &p(d, "fp.csv"),
        ])?;
        cli_ok(&[
            "pretrain",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            &p(d, "g.ckpt"),
            "--hidden-dim",
            "16",
            "--epochs",
            "3",
            "--loss-csv",
            &p(d, "loss.csv"),
        ])?;
        cli_ok(&[
            "embed-graph",
            "--dataset",
            dataset,
            "--checkpoint",
            &p(d, "g.ckpt"),
            "--out",
            &p(d, "gin.csv"),
        ])?;
    }
    same_files(&a, &b, &["fp.csv", "g.ckpt", "loss.csv", "gin.csv"])?;

    for s in STRATEGIES {
        let out = dir.join(format!("jobs3-{s}"));
        evaluate(s, &out, "3")?;
        same_files(&root.join("e2e").join(s), &out, &REPORT_FILES)?;
    }

    let gin_cfg = r.join("configs/gin.json");
    let predict = |jobs: &str| {
        cli_ok(&[
            "predict",
            "--config",
            gin_cfg.to_str().unwrap(),
            "--id",
            "demo-01",
            "--jobs",
            jobs,
        ])
        .map(|o| o.stdout)
    };
    ensure(predict("1")? == predict("3")?, "predict output differs")?;

    let late = root.join("e2e/late");
    for d in [&a, &b] {
        cli_ok(&[
            "report",
            "--metrics",
            &p(&late, "metrics.csv"),
            "--predictions",
            &p(&late, "predictions.csv"),
            "--dataset",
            dataset,
            "--out",
            &p(d, "report"),
        ])?;
    }
    same_files(&a.join("report"), &b.join("report"), &REPORT_FILES[2..])?;
    Ok("validate-data, fingerprint, pretrain, embed-graph, evaluate (--jobs 1 vs 3), predict, report: byte-identical reruns".into())
}

fn main() {
    let root = tempfile::tempdir().expect("tempdir");
    let root_path = root.path().to_path_buf();
    let checks: Vec<(&str, Box<dyn FnOnce() -> Check>)> = vec![
        ("metric arithmetic", Box::new(metric_arithmetic)),
        ("late-fusion formula", Box::new(late_fusion_formula)),
        ("GPR oracle equivalence", Box::new(gpr_oracle)),
        ("PCA", Box::new(pca_checks)),
        ("GIN invariance and gradients", Box::new(gin_checks)),
        ("contrastive loss", Box::new(contrastive_checks)),
        ("SMILES parser", Box::new(smiles_checks)),
        (
            "end-to-end LOOCV",
            Box::new({
                let r = root_path.clone();
                move || end_to_end(&r)
            }),
        ),
        ("synthetic alpha recovery", Box::new(alpha_recovery)),
        (
            "determinism",
            Box::new({
                let r = root_path.clone();
                move || determinism(&r)
            }),
        ),
    ];
    let total = checks.len();
    let mut passed = 0;
    for (name, check) in checks {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS {name}: {detail}");
            }
            Err(why) => println!("FAIL {name}: {why}"),
        }
    }
    println!("acceptance: {passed}/{total} criteria pass");
}
