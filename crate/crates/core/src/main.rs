use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qkdrelay::audit::{audit_transcript, table_one, Attacker};
use qkdrelay::cryptoseal::{KemParamSet, ProviderKind};
use qkdrelay::netharness::{
    load_topology, paris, run_continuous, run_on, run_session, serve_keys, write_run_outputs, HarnessError, RunPlan,
    SessionTrigger, Simulator, Topology, DEFAULT_L_TARGET,
};
use qkdrelay::relay::{SessionTranscript, Variant};

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;

#[derive(Parser)]
#[command(name = "qkdrelay", version, about = "Trusted-node QKD key relay simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print relay efficiency per KEM parameter set.
    EtaTable {
        /// Parameter sets, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "kem-512,kem-768,kem-1024")]
        params: Vec<KemParamSet>,
        #[arg(long)]
        json: bool,
    },
    /// Run relay sessions continuously over simulated time.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "3600")]
        duration: f64,
        /// Start a session every S seconds instead of whenever key is available.
        #[arg(long, value_name = "S")]
        periodic: Option<f64>,
        #[arg(long)]
        aes_key_reuse: bool,
        /// Directory for telemetry.csv, sessions.json, efficiency.json and summary.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write transcripts.jsonl into the output directory.
        #[arg(long)]
        transcripts: bool,
    },
    /// Run a single session once the path holds enough key.
    Session {
        #[command(flatten)]
        common: CommonArgs,
        /// Longest simulated wait for key, in seconds.
        #[arg(long, default_value = "3600")]
        max_wait: f64,
        /// Write the session transcript (JSON lines) here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Simulate, then serve the final keys of one node over a local socket.
    Serve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        node: String,
        #[arg(long)]
        addr: String,
        /// Simulated seconds of key production before serving.
        #[arg(long, default_value = "60")]
        duration: f64,
    },
    /// Replay transcripts from an adversary's position.
    Audit {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long = "as", value_name = "charlie|eve")]
        attacker: Attacker,
        /// Locations Eve has broken into.
        #[arg(long, value_delimiter = ',')]
        compromise: Vec<String>,
    },
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Topology file; the bundled Paris topology when omitted.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "LIP6,OG,TP")]
    path: Vec<String>,
    #[arg(long, default_value = "pqc-secured")]
    variant: Variant,
    #[arg(long, default_value = "kem-512")]
    kem_params: KemParamSet,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Target final key length per session, in bits.
    #[arg(short = 'l', long = "l-target", default_value_t = DEFAULT_L_TARGET)]
    l_target: usize,
    #[arg(long, default_value = "standard")]
    provider: ProviderKind,
    #[arg(long, default_value = "1")]
    tick: f64,
}

impl CommonArgs {
    fn topology(&self) -> Result<Topology, Failure> {
        match &self.topology {
            None => Ok(paris()),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
                load_topology(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
            }
        }
    }

    fn plan(&self, duration_s: f64) -> RunPlan {
        let path: Vec<&str> = self.path.iter().map(String::as_str).collect();
        let mut plan = RunPlan::new(self.variant, &path, duration_s);
        plan.kem_params = self.kem_params.clone();
        plan.seed = self.seed;
        plan.tick_s = self.tick;
        plan.provider = self.provider;
        plan.trigger = SessionTrigger::OnKeyAvailable {
            l_target: self.l_target,
        };
        plan
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: String) -> Self {
        Self {
            code: EXIT_CONFIG,
            message,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = if e.is_config_error() { EXIT_CONFIG } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn eta_table(params: &[KemParamSet], json: bool) -> Result<u8, Failure> {
    let rows = table_one(params);
    if json {
        print_json(&rows)?;
        return Ok(0);
    }
    println!(
        "{:<10} {:>8} {:>12} {:>14}",
        "params", "l_ct", "direct-kem", "pqc-secured"
    );
    for r in rows {
        println!(
            "{:<10} {:>8} {:>12} {:>14}",
            r.params, r.l_ct, r.direct_kem_percent, r.kem_then_aes_percent
        );
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::EtaTable { params, json } => eta_table(&params, json),
        Command::Simulate {
            common,
            duration,
            periodic,
            aes_key_reuse,
            out_dir,
            transcripts,
        } => {
            let topology = common.topology()?;
            let mut plan = common.plan(duration);
            plan.aes_key_reuse = aes_key_reuse;
            plan.capture_transcripts = transcripts && out_dir.is_some();
            if let Some(interval_s) = periodic {
                plan.trigger = SessionTrigger::Periodic {
                    interval_s,
                    l_target: common.l_target,
                };
            }
            let summary = run_continuous(&topology, &plan)?;
            if let Some(dir) = out_dir {
                write_run_outputs(&summary, &dir)?;
            }
            print_json(&summary.stats)?;
            Ok(0)
        }
        Command::Session {
            common,
            max_wait,
            transcript,
        } => {
            let topology = common.topology()?;
            let shot = run_session(&topology, &common.plan(max_wait))?;
            if let Some(path) = transcript {
                let mut out = BufWriter::new(File::create(path)?);
                shot.outcome.transcript.write_jsonl(&mut out)?;
                out.flush()?;
            }
            print_json(&shot.report)?;
            Ok(if shot.outcome.completed() { 0 } else { EXIT_ABORT })
        }
        Command::Serve {
            common,
            node,
            addr,
            duration,
        } => {
            let topology = common.topology()?;
            let plan = common.plan(duration);
            let mut sim = Simulator::new(&topology, plan.seed, plan.provider)?;
            let summary = run_on(&mut sim, &plan)?;
            let server = serve_keys(&sim, &node, &addr)?;
            eprintln!(
                "serving {} final key bits of {node} on {}",
                summary.stats.final_bits,
                server.local_addr()
            );
            server.join();
            Ok(0)
        }
        Command::Audit {
            transcript,
            attacker,
            compromise,
        } => {
            let file =
                File::open(&transcript).map_err(|e| Failure::config(format!("{}: {e}", transcript.display())))?;
            let sessions = SessionTranscript::read_jsonl(BufReader::new(file))
                .map_err(|e| Failure::config(format!("{}: {e}", transcript.display())))?;
            let compromised: Vec<&str> = compromise.iter().map(String::as_str).collect();
            let mut out = io::stdout().lock();
            for t in &sessions {
                let report = audit_transcript(t, attacker, &compromised);
                serde_json::to_writer(&mut out, &report).map_err(io::Error::from)?;
                writeln!(out)?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
