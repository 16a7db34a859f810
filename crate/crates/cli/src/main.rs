use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;

use cyclic_bc::algebra::{bound_poly, term_to_string};
use cyclic_bc::checker::{classify, factor};
use cyclic_bc::evaluator::{eval_root, expand_relation, EvalError, OracleEntry, OracleEnv, DEFAULT_FUEL};
use cyclic_bc::kernel::{OracleDecl, OracleSource};
use cyclic_bc::nonuniform::{
    circuit_eval, compile_family_to_proof, encode, family_oracle, pipeline_eval, CircuitFamily,
};
use cyclic_bc::prooffmt::{load_advice, parse_graph, serialize_graph};
use cyclic_bc::translator::{cycle_nf, translate};
use cyclic_bc::value::{parse_bits, to_binary};
use cyclic_bc::{ProofGraph, Value};

#[derive(Parser)]
#[command(name = "cbc", version, about = "Check, run and compile cyclic safe-recursion proofs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a proof graph and print the verdict.
    Check {
        #[command(flatten)]
        proof: ProofArgs,
        /// Also print buds and per-node close/open sets as JSON.
        #[arg(long)]
        cycles: bool,
    },
    /// Evaluate a proof graph at the given arguments.
    Eval {
        #[command(flatten)]
        proof: ProofArgs,
        #[arg(long, value_delimiter = ',')]
        normal: Vec<BigUint>,
        #[arg(long, value_delimiter = ',')]
        safe: Vec<BigUint>,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Print the algebra term of an accepted graph.
    Translate {
        #[command(flatten)]
        proof: ProofArgs,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Print the coefficients (constant first) of the output-length bound.
    Bound {
        #[command(flatten)]
        proof: ProofArgs,
    },
    /// Cut free subgraphs out into oracle leaves.
    Factor {
        #[command(flatten)]
        proof: ProofArgs,
        /// Output directory; the factored graph and one file per oracle go here.
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Expand a length relation into a finite proof of the given depth.
    Expand {
        /// `builtin:<name>` or an advice file.
        #[arg(long)]
        advice: String,
        #[arg(long, default_value_t = 1)]
        arity: usize,
        #[arg(long)]
        depth: usize,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Print the binary description of the circuit for one input length.
    CircuitEncode {
        #[arg(long)]
        family: String,
        #[arg(long)]
        length: usize,
    },
    /// Run an input through the description pipeline and compare with the circuit.
    CircuitPipeline {
        #[arg(long)]
        family: String,
        #[arg(long)]
        input: String,
    },
    /// Emit the description builder of a family as a proof graph.
    CircuitCompile {
        #[arg(long)]
        family: String,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ProofArgs {
    /// Proof file (`.cbp`).
    path: PathBuf,
    /// Oracle override, `name=builtin:<advice>` or `name=<advice file>`.
    #[arg(long = "oracle", value_parser = parse_override)]
    oracles: Vec<(String, String)>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (name, src) = s.split_once('=').ok_or("expected name=source")?;
    Ok((name.to_string(), src.to_string()))
}

/// A failed command: message for stderr and the exit code.
struct Failure(u8, String);

impl Failure {
    fn usage(msg: impl ToString) -> Self {
        Failure(2, msg.to_string())
    }

    fn eval(e: EvalError) -> Self {
        match e {
            EvalError::FuelExhausted => Failure(3, e.to_string()),
            other => Failure(1, other.to_string()),
        }
    }
}

type Outcome = Result<(u8, String), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((code, report)) => {
            print!("{report}");
            ExitCode::from(code)
        }
        Err(Failure(code, msg)) => {
            eprintln!("cbc: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Check { proof, cycles } => {
            let g = load_graph(&proof.path)?;
            let v = classify(&g);
            let yes = |b: bool| if b { "yes" } else { "no" };
            let mut r = String::new();
            let _ = writeln!(r, "proof: {}", g.name());
            let _ = writeln!(r, "nodes: {}", g.len());
            let _ = writeln!(r, "progressing: {}", yes(v.progressing.holds));
            let _ = writeln!(r, "safe: {}", yes(v.safe.holds));
            let _ = writeln!(r, "left-leaning: {}", yes(v.left_leaning.holds));
            let _ = writeln!(r, "classification: {}", v.classification);
            for reason in v.reasons() {
                let _ = writeln!(r, "reason: {reason}");
            }
            if cycles {
                match cycle_nf(&g) {
                    Ok(a) => r.push_str(&a.to_json(&g)),
                    Err(e) => {
                        let _ = writeln!(r, "cycles: {e}");
                    }
                }
            }
            Ok((if v.classification.accepted() { 0 } else { 1 }, r))
        }
        Command::Eval { proof, normal, safe, fuel } => {
            let g = load_graph(&proof.path)?;
            let env = build_env(&g, &proof.path, &proof.oracles)?;
            let v = eval_root(&g, &normal, &safe, &env, fuel).map_err(Failure::eval)?;
            Ok((0, value_report(&v)))
        }
        Command::Translate { proof, out } => {
            let g = load_graph(&proof.path)?;
            let t = translate(&g).map_err(|e| Failure(1, e.to_string()))?;
            emit(out.as_deref(), format!("{}\n", term_to_string(&t)))
        }
        Command::Bound { proof } => {
            let g = load_graph(&proof.path)?;
            let t = translate(&g).map_err(|e| Failure(1, e.to_string()))?;
            let p = bound_poly(&t);
            let coeffs: Vec<String> = p.coeffs().iter().map(|c| c.to_string()).collect();
            Ok((0, format!("degree: {}\ncoefficients: {}\n", p.degree(), coeffs.join(" "))))
        }
        Command::Factor { proof, out } => {
            let g = load_graph(&proof.path)?;
            let f = factor(&g).map_err(|e| Failure(1, e.to_string()))?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Failure(1, format!("{}: {e}", dir.display())))?;
                    let mut written = vec![write_file(&dir.join(format!("{}.cbp", f.graph.name())), &serialize_graph(&f.graph))?];
                    for (decl, sub) in &f.oracles {
                        written.push(write_file(&dir.join(format!("{}.cbp", decl.name)), &serialize_graph(sub))?);
                    }
                    Ok((0, written.iter().map(|p| format!("wrote {}\n", p.display())).collect()))
                }
                None => {
                    let mut r = serialize_graph(&f.graph);
                    for (_, sub) in &f.oracles {
                        r.push('\n');
                        r.push_str(&serialize_graph(sub));
                    }
                    Ok((0, r))
                }
            }
        }
        Command::Expand { advice, arity, depth, out } => {
            let a = load_advice(&advice).map_err(Failure::usage)?;
            emit(out.as_deref(), serialize_graph(&expand_relation(&a, arity, depth)))
        }
        Command::CircuitEncode { family, length } => {
            let fam = load_family(&family)?;
            let c = fam.circuit(length).map_err(|e| Failure(1, e.to_string()))?;
            let bits: String = encode(&c).iter().map(|&b| if b { '1' } else { '0' }).collect();
            Ok((0, format!("gates: {}\nbits: {}\ndescription: {bits}\n", c.size(), bits.len())))
        }
        Command::CircuitPipeline { family, input } => {
            let fam = Arc::new(load_family(&family)?);
            let bits = parse_input(&input)?;
            let c = fam.circuit(bits.len()).map_err(|e| Failure(1, e.to_string()))?;
            let direct = circuit_eval(&c, &bits).map_err(|e| Failure(1, e.to_string()))?;
            let piped = pipeline_eval(&fam, &bits).map_err(|e| Failure(1, e.to_string()))?;
            let b = |x: bool| u8::from(x);
            let r = format!("pipeline: {}\ncircuit: {}\n", b(piped), b(direct));
            Ok((if piped == direct { 0 } else { 1 }, r))
        }
        Command::CircuitCompile { family, out } => {
            let fam = Arc::new(load_family(&family)?);
            let compiled = compile_family_to_proof(fam);
            emit(out.as_deref(), serialize_graph(&compiled.graph))
        }
    }
}

fn emit(out: Option<&Path>, text: String) -> Outcome {
    match out {
        Some(p) => Ok((0, format!("wrote {}\n", write_file(p, &text)?.display()))),
        None => Ok((0, text)),
    }
}

fn write_file(p: &Path, text: &str) -> Result<PathBuf, Failure> {
    std::fs::write(p, text).map_err(|e| Failure(1, format!("{}: {e}", p.display())))?;
    Ok(p.to_path_buf())
}

fn value_report(v: &Value) -> String {
    format!("value: {v}\nbinary: {}\n", to_binary(v))
}

fn parse_input(s: &str) -> Result<Vec<bool>, Failure> {
    parse_bits(s).ok_or_else(|| Failure::usage(format!("input must be a bit string, got {s:?}")))
}

fn load_family(spec: &str) -> Result<CircuitFamily, Failure> {
    CircuitFamily::parse(spec).map_err(Failure::usage)
}

fn load_graph(path: &Path) -> Result<ProofGraph, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    parse_graph(&text).map_err(|e| Failure(1, format!("{}: {e}", path.display())))
}

/// Oracles of `g`: overrides first, then family builtins and subgraph files next to the proof,
/// then advice builtins and files (relative to the proof's directory).
fn build_env(g: &ProofGraph, path: &Path, overrides: &[(String, String)]) -> Result<OracleEnv, Failure> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut err = None;
    let decls: Vec<OracleDecl> = g
        .oracles()
        .values()
        .map(|d| match &d.source {
            OracleSource::Path(p) if Path::new(p).is_relative() => {
                OracleDecl { source: OracleSource::Path(dir.join(p).to_string_lossy().into_owned()), ..d.clone() }
            }
            _ => d.clone(),
        })
        .collect();
    let env = OracleEnv::from_decls(&decls, |d| {
        let entry = resolve(d, &dir, overrides);
        match entry {
            Ok(e) => e,
            Err(f) => {
                err.get_or_insert(f);
                None
            }
        }
    });
    if let Some(f) = err {
        return Err(f);
    }
    env.map_err(|e| Failure(1, e))
}

fn resolve(d: &OracleDecl, dir: &Path, overrides: &[(String, String)]) -> Result<Option<OracleEntry>, Failure> {
    if let Some((_, src)) = overrides.iter().rev().find(|(n, _)| *n == d.name) {
        let advice = load_advice(src).map_err(Failure::usage)?;
        return Ok(Some(OracleEntry::relation(d.normals, d.safes, advice)));
    }
    match &d.source {
        // Leaves past the depth of an expansion; reaching one is an error, not a value.
        OracleSource::Builtin(name) if name == "unknown" => Ok(Some(OracleEntry::host(d.normals, d.safes, |_, _| {
            Err(EvalError::Malformed("input longer than the expansion depth".into()))
        }))),
        OracleSource::Builtin(name) => match name.strip_prefix("family:") {
            Some(fam) => Ok(Some(family_oracle(Arc::new(load_family(fam)?)))),
            None => Ok(None),
        },
        OracleSource::Subgraph(name) => {
            let p = dir.join(format!("{name}.cbp"));
            let sub = load_graph(&p)?;
            let env = build_env(&sub, &p, overrides)?;
            Ok(Some(OracleEntry::subgraph(Arc::new(sub), env, DEFAULT_FUEL)))
        }
        OracleSource::Path(_) => Ok(None),
    }
}
