//! `kcd`: command-line front end for keyed chaotic tensor masking.
//!
//! Exit codes: 0 ok, 1 internal failure, 2 invalid arguments or input,
//! 3 I/O or file format, 4 chaos verification failed, 5 container options
//! mismatch, 6 `diagnose` found a non-positive exponent.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kcd_core::tensorio::{
    read_container, read_csv, read_tensor, to_csv, write_container, write_csv, write_tensor,
};
use kcd_core::{
    decrypt, encrypt, generate_mask, resolve_config, CipherOptions, Error, LyapunovOptions, LyapunovWarning,
    MasterKey, Nonce, Tensor,
};
use rand::RngCore;
use sha2::{Digest, Sha256};

const KEY_ENV: &str = "KCD_KEY";

#[derive(Parser)]
#[command(
    name = "kcd",
    version,
    about = "Reversible tensor masking with keyed chaotic graph dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mask a tensor into a container.
    Encrypt(EncryptArgs),
    /// Recover a tensor from a container.
    Decrypt(DecryptArgs),
    /// Write the raw mask for a given shape.
    Mask(MaskArgs),
    /// Estimate the largest Lyapunov exponent of a resolved system.
    Diagnose(DiagnoseArgs),
    /// Show a resolved configuration or a container header.
    Inspect(InspectArgs),
    /// Input- and output-masked round trip through a toy linear model.
    Demo(DemoArgs),
}

#[derive(Args)]
struct KeyArg {
    /// 64 hex digits. The KCD_KEY environment variable takes precedence and
    /// keeps the key out of shell history.
    #[arg(long, value_name = "HEX64")]
    key: Option<String>,
}

impl KeyArg {
    fn resolve(&self) -> Result<MasterKey, Failure> {
        let hex = std::env::var(KEY_ENV)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .or_else(|| self.key.clone())
            .ok_or_else(|| Failure::usage(format!("no key: pass --key or set {KEY_ENV}")))?;
        Ok(MasterKey::from_hex(&hex)?)
    }
}

#[derive(Args, Default)]
struct OptionArgs {
    /// logistic | tent | baker | standard | cat | auto
    #[arg(long)]
    map: Option<String>,
    /// er | ws | auto
    #[arg(long)]
    graph: Option<String>,
    /// Logistic growth rate.
    #[arg(long)]
    r: Option<String>,
    /// Tent peak.
    #[arg(long)]
    mu: Option<String>,
    /// Baker split point.
    #[arg(long)]
    s: Option<String>,
    /// Standard-map kick strength.
    #[arg(long)]
    kick: Option<String>,
    /// Erdős–Rényi edge probability.
    #[arg(long)]
    p: Option<String>,
    /// Watts–Strogatz lattice degree.
    #[arg(long)]
    k: Option<String>,
    /// Watts–Strogatz rewiring probability.
    #[arg(long)]
    beta: Option<String>,
    /// Coupling strength (weight row sum).
    #[arg(long = "eps-c")]
    eps_c: Option<String>,
    /// Mask amplitude.
    #[arg(long)]
    alpha: Option<String>,
    /// Per-step noise amplitude.
    #[arg(long)]
    sigma: Option<String>,
    /// Discarded burn-in steps.
    #[arg(long)]
    burn: Option<String>,
    /// Refuse configurations whose estimated exponent is not positive.
    #[arg(long)]
    verify_chaos: bool,
}

impl OptionArgs {
    fn build(&self) -> Result<CipherOptions, Failure> {
        let named = [
            ("map", &self.map),
            ("graph", &self.graph),
            ("r", &self.r),
            ("mu", &self.mu),
            ("s", &self.s),
            ("kick", &self.kick),
            ("p", &self.p),
            ("k", &self.k),
            ("beta", &self.beta),
            ("eps_c", &self.eps_c),
            ("alpha", &self.alpha),
            ("sigma", &self.sigma),
            ("t_burn", &self.burn),
        ];
        let mut opts =
            CipherOptions::from_pairs(named.iter().filter_map(|(k, v)| v.as_deref().map(|v| (*k, v))))?;
        opts.verify_chaos = self.verify_chaos;
        Ok(opts)
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct NonceChoice {
    /// 32 hex digits. Must never repeat under one key.
    #[arg(long, value_name = "HEX32")]
    nonce: Option<String>,
    /// Draw a fresh nonce from the operating system.
    #[arg(long)]
    gen_nonce: bool,
}

impl NonceChoice {
    fn resolve(&self) -> Result<Nonce, Failure> {
        match &self.nonce {
            Some(h) => Ok(Nonce::from_hex(h)?),
            None => {
                let mut bytes = [0u8; 16];
                rand::rngs::OsRng.fill_bytes(&mut bytes);
                Ok(Nonce::new(bytes))
            }
        }
    }
}

#[derive(Args)]
struct EncryptArgs {
    #[command(flatten)]
    key: KeyArg,
    #[command(flatten)]
    nonce: NonceChoice,
    /// Tensor file (.kten) or CSV (.csv).
    #[arg(long = "in")]
    input: PathBuf,
    /// Container to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    options: OptionArgs,
    /// Decrypt the written container again and report the round-trip error.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct DecryptArgs {
    #[command(flatten)]
    key: KeyArg,
    #[arg(long = "in")]
    input: PathBuf,
    /// Tensor file (.kten) or CSV (.csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    key: KeyArg,
    #[arg(long, value_name = "HEX32")]
    nonce: String,
    /// Comma-separated dimensions, e.g. 2,4. The last axis is the node count.
    #[arg(long)]
    shape: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    options: OptionArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    key: KeyArg,
    #[arg(long, value_name = "HEX32")]
    nonce: String,
    /// Number of nodes.
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// Write the retained per-step log growth rates here, one per line.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    options: OptionArgs,
}

#[derive(Args)]
struct InspectArgs {
    /// Dump a container header instead; no key needed.
    #[arg(long, conflicts_with_all = ["nonce", "d"])]
    container: Option<PathBuf>,
    #[command(flatten)]
    key: KeyArg,
    #[arg(long, value_name = "HEX32", required_unless_present = "container")]
    nonce: Option<String>,
    #[arg(long, required_unless_present = "container")]
    d: Option<usize>,
    /// Write the 0/1 adjacency matrix as CSV.
    #[arg(long)]
    adjacency: Option<PathBuf>,
    /// Write the weight matrix as CSV.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    options: OptionArgs,
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    key: KeyArg,
    /// Input nonce; the output nonce is derived from it. Defaults to zero.
    #[arg(long, value_name = "HEX32")]
    nonce: Option<String>,
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the client-side recovered model output here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    options: OptionArgs,
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl Failure {
    fn at(path: &Path) -> impl FnOnce(Error) -> Self + '_ {
        move |e| {
            let mut f = Self::from(e);
            f.message = format!("{}: {}", path.display(), f.message);
            f
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_)
            | Error::UnsupportedFormat(_)
            | Error::UnsupportedVersion(_)
            | Error::CorruptFile(_) => 3,
            Error::ChaosVerificationFailed { .. } => 4,
            Error::ConfigMismatch { .. } => 5,
            Error::NumericalDivergence { .. } | Error::StreamExhausted | Error::DomainViolation { .. } => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load_tensor(path: &Path) -> Result<Tensor, Failure> {
    if is_csv(path) {
        read_csv(path)
    } else {
        read_tensor(path)
    }
    .map_err(Failure::at(path))
}

fn save_tensor(path: &Path, t: &Tensor) -> Result<(), Failure> {
    if is_csv(path) {
        write_csv(path, t)
    } else {
        write_tensor(path, t)
    }
    .map_err(Failure::at(path))
}

fn parse_shape(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .map_err(|_| Failure::usage(format!("bad shape {s:?}: expected e.g. 2,4")))
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

fn cmd_encrypt(a: &EncryptArgs) -> Result<(), Failure> {
    let key = a.key.resolve()?;
    let opts = a.options.build()?;
    let nonce = a.nonce.resolve()?;
    let x = load_tensor(&a.input)?;
    let masked = encrypt(&x, &key, &nonce, &opts)?;
    write_container(&a.out, &masked).map_err(Failure::at(&a.out))?;
    println!("nonce={}", nonce.to_hex());
    println!("fingerprint={}", hex::encode(masked.fingerprint));
    if a.check {
        let back = decrypt(&read_container(&a.out).map_err(Failure::at(&a.out))?, &key)?;
        let err = max_abs_diff(back.values(), x.values());
        println!("check_max_error={err:e}");
        if err.is_nan() || err > 1e-12 {
            return Err(Failure {
                code: 1,
                message: format!("round trip error {err:e} exceeds 1e-12"),
            });
        }
    }
    Ok(())
}

fn cmd_decrypt(a: &DecryptArgs) -> Result<(), Failure> {
    let key = a.key.resolve()?;
    let masked = read_container(&a.input).map_err(Failure::at(&a.input))?;
    let x = decrypt(&masked, &key)?;
    save_tensor(&a.out, &x)
}

fn cmd_mask(a: &MaskArgs) -> Result<(), Failure> {
    let key = a.key.resolve()?;
    let nonce = Nonce::from_hex(&a.nonce)?;
    let opts = a.options.build()?;
    let shape = parse_shape(&a.shape)?;
    let mask = generate_mask(&key, &nonce, &shape, &opts)?.into_tensor(shape)?;
    save_tensor(&a.out, &mask)
}

fn cmd_diagnose(a: &DiagnoseArgs) -> Result<ExitCode, Failure> {
    let key = a.key.resolve()?;
    let nonce = Nonce::from_hex(&a.nonce)?;
    let mut opts = a.options.build()?;
    // The gate is what this command reports on, not a precondition.
    opts.verify_chaos = false;
    let sys = resolve_config(&key, &nonce, a.d, &opts)?;
    let rep = sys.lyapunov(&LyapunovOptions {
        steps: a.steps,
        epsilon: a.epsilon,
        ..Default::default()
    })?;
    println!("map={}", sys.config.map.name());
    if let Some(v) = sys.config.params.active(sys.config.map) {
        println!("map_param={v}");
    }
    println!("d={}", a.d);
    println!("lambda_hat={}", rep.lambda_hat);
    println!("lambda_all={}", rep.lambda_all);
    println!("steps={}", rep.steps);
    println!("epsilon={:e}", rep.epsilon);
    println!("discarded={}", rep.discarded);
    println!(
        "warning={}",
        match rep.warning {
            Some(LyapunovWarning::Synchronized { .. }) => "synchronized",
            None => "none",
        }
    );
    println!("chaotic={}", rep.is_chaotic());
    if let Some(path) = &a.csv {
        let mut text = String::new();
        for v in &rep.per_step_logs {
            text.push_str(&format!("{v:?}\n"));
        }
        std::fs::write(path, text).map_err(|e| Failure::at(path)(e.into()))?;
    }
    Ok(if rep.is_chaotic() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(6)
    })
}

fn matrix_csv(d: usize, value: impl Fn(usize, usize) -> f64) -> Result<String, Failure> {
    let data = (0..d * d).map(|i| value(i / d, i % d)).collect();
    Ok(to_csv(&Tensor::new(vec![d, d], data)?))
}

fn print_options(o: &CipherOptions) {
    println!("map={}", o.map.map_or("auto", |m| m.name()));
    println!("graph={}", o.family.map_or("auto", |f| f.name()));
    let p = &o.pins;
    for (name, v) in [
        ("r", p.r),
        ("mu", p.mu),
        ("s", p.s),
        ("kick", p.kick),
        ("p", p.p),
        ("beta", p.beta),
        ("eps_c", p.eps_c),
    ] {
        if let Some(v) = v {
            println!("pin.{name}={v}");
        }
    }
    if let Some(k) = p.k {
        println!("pin.k={k}");
    }
    println!("t_burn={}", o.t_burn);
    println!("sigma={}", o.noise_sigma);
    println!("alpha={}", o.alpha);
}

fn cmd_inspect(a: &InspectArgs) -> Result<(), Failure> {
    if let Some(path) = &a.container {
        let m = read_container(path).map_err(Failure::at(path))?;
        println!("nonce={}", m.nonce.to_hex());
        println!("fingerprint={}", hex::encode(m.fingerprint));
        println!("fingerprint_valid={}", m.fingerprint == m.options.fingerprint());
        print_options(&m.options);
        let dims: Vec<String> = m.tensor.shape().iter().map(|d| d.to_string()).collect();
        println!("shape={}", dims.join(","));
        return Ok(());
    }
    let key = a.key.resolve()?;
    let nonce = Nonce::from_hex(a.nonce.as_deref().unwrap_or_default())?;
    let d = a.d.unwrap_or_default();
    let opts = a.options.build()?;
    let sys = resolve_config(&key, &nonce, d, &opts)?;
    let cfg = &sys.config;
    println!("map={}", cfg.map.name());
    if let Some(v) = cfg.params.active(cfg.map) {
        println!("map_param={v}");
    }
    println!("graph={}", cfg.graph.topology.family().name());
    match cfg.graph.topology {
        kcd_core::Topology::ErdosRenyi { p } => println!("p={p}"),
        kcd_core::Topology::WattsStrogatz { k, beta } => {
            println!("k={k}");
            println!("beta={beta}");
        }
    }
    println!("eps_c={}", cfg.graph.eps_c);
    println!("d={}", cfg.d());
    println!("edges={}", sys.adjacency.directed_entries() / 2);
    println!("t_burn={}", cfg.t_burn);
    println!("sigma={}", cfg.noise_sigma);
    println!("alpha={}", cfg.alpha);
    println!("fingerprint={}", hex::encode(opts.fingerprint()));
    if let Some(rep) = &sys.lyapunov {
        println!("lambda_hat={}", rep.lambda_hat);
    }
    if let Some(path) = &a.adjacency {
        let adj = &sys.adjacency;
        let text = matrix_csv(d, |i, j| if adj.has_edge(i, j) { 1.0 } else { 0.0 })?;
        std::fs::write(path, text).map_err(|e| Failure::at(path)(e.into()))?;
    }
    if let Some(path) = &a.weights {
        let text = matrix_csv(d, |i, j| sys.weights.get(i, j))?;
        std::fs::write(path, text).map_err(|e| Failure::at(path)(e.into()))?;
    }
    Ok(())
}

/// Output nonce for the model's reply, bound to the request nonce.
fn reply_nonce(input: &Nonce) -> Nonce {
    let digest = Sha256::new()
        .chain_update(b"kcd-demo-reply")
        .chain_update(input.as_bytes())
        .finalize();
    Nonce::from_slice(&digest[..16]).expect("16 bytes")
}

/// Fixed toy model `y = x M + b` over the last axis.
struct ToyModel {
    d: usize,
    m: Vec<f64>,
    b: Vec<f64>,
}

impl ToyModel {
    fn new(d: usize) -> Self {
        // Half identity, half cyclic shift: norm-preserving enough that mask
        // errors pass through at their own scale.
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] += 0.5;
            m[i * d + (i + 1) % d] += 0.5;
        }
        let b = (0..d).map(|j| 0.25 * (j as f64 + 1.0)).collect();
        Self { d, m, b }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let d = self.d;
        let mut out = Vec::with_capacity(x.len());
        for row in x.values().chunks(d) {
            for j in 0..d {
                let dot: f64 = (0..d).map(|i| row[i] * self.m[i * d + j]).sum();
                out.push(dot + self.b[j]);
            }
        }
        Tensor::new(x.shape().to_vec(), out).expect("same shape")
    }
}

fn add(a: &Tensor, b: &Tensor, sign: f64) -> Tensor {
    let data = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x + sign * y)
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Client masks with `client_key`; the model holds the true key.
fn demo_round_trip(
    x: &Tensor,
    model_key: &MasterKey,
    client_key: &MasterKey,
    nonce: &Nonce,
    opts: &CipherOptions,
) -> Result<Tensor, Failure> {
    let shape = x.shape().to_vec();
    let reply = reply_nonce(nonce);
    let mask = |key: &MasterKey, n: &Nonce| -> Result<Tensor, Failure> {
        Ok(generate_mask(key, n, &shape, opts)?.into_tensor(shape.clone())?)
    };
    let sent = add(x, &mask(client_key, nonce)?, 1.0);
    // Model side: unmask, infer, mask the reply under the second trajectory.
    let y = ToyModel::new(*shape.last().unwrap()).apply(&add(&sent, &mask(model_key, nonce)?, -1.0));
    let returned = add(&y, &mask(model_key, &reply)?, 1.0);
    // Client side.
    Ok(add(&returned, &mask(client_key, &reply)?, -1.0))
}

fn cmd_demo(a: &DemoArgs) -> Result<(), Failure> {
    let key = a.key.resolve()?;
    let nonce = match &a.nonce {
        Some(h) => Nonce::from_hex(h)?,
        None => Nonce::new([0; 16]),
    };
    let opts = a.options.build()?;
    let x = load_tensor(&a.input)?;
    let want = ToyModel::new(*x.shape().last().unwrap()).apply(&x);

    let good = demo_round_trip(&x, &key, &key, &nonce, &opts)?;
    let bad = demo_round_trip(&x, &key, &key.with_bit_flipped(0), &nonce, &opts)?;
    println!("input_nonce={}", nonce.to_hex());
    println!("output_nonce={}", reply_nonce(&nonce).to_hex());
    println!("alpha={}", opts.alpha);
    println!(
        "correct_key_max_error={:e}",
        max_abs_diff(good.values(), want.values())
    );
    println!(
        "wrong_key_mean_error={:e}",
        mean_abs_diff(bad.values(), want.values())
    );
    if let Some(path) = &a.out {
        save_tensor(path, &good)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Encrypt(a) => cmd_encrypt(a).map(|_| ExitCode::SUCCESS),
        Command::Decrypt(a) => cmd_decrypt(a).map(|_| ExitCode::SUCCESS),
        Command::Mask(a) => cmd_mask(a).map(|_| ExitCode::SUCCESS),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Inspect(a) => cmd_inspect(a).map(|_| ExitCode::SUCCESS),
        Command::Demo(a) => cmd_demo(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("kcd: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
