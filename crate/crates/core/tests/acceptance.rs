//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashSet;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{acb_net, chain_net, rng, ACB};
use qkdrelay::audit::{
    charlie_view, decrypt_with_aux, eta_direct_kem, eta_kem_then_aes, measured_eta, reconstruct_as_charlie,
};
use qkdrelay::cryptoseal::{CryptoProvider, KemParamSet, MockProvider, ProviderKind, StandardProvider};
use qkdrelay::keycore::{random_register, KeyRegister};
use qkdrelay::netharness::{paris, run_continuous, RunPlan};
use qkdrelay::qkdsim::write_telemetry_csv;
use qkdrelay::relay::{run_multi_hop, MessageKind, RelayOutcome, SessionStatus, Variant};
use uuid::Uuid;

const TABLE_BUDGET: Duration = Duration::from_secs(1);
const ETA_BUDGET: Duration = Duration::from_secs(30);
const PARIS_BUDGET: Duration = Duration::from_secs(120);
const SESSIONS_PER_VARIANT: u64 = 1000;
const TRUST_SEEDS: u64 = 1000;
const PARIS_HOURS: f64 = 11.0;
const PARIS_TARGET_BPS: f64 = 612.0;
const PARIS_TOLERANCE: f64 = 0.05;
const DIRECT_TARGET_BPS: f64 = 25.5;
const DIRECT_TOLERANCE: f64 = 0.10;
const EXHAUSTIVE_MAX_LEN: usize = 1024;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn session(
    provider: &dyn CryptoProvider,
    nodes: &[&str],
    blocks: usize,
    variant: Variant,
    params: &KemParamSet,
    l: usize,
    seed: u64,
) -> RelayOutcome {
    let mut net = chain_net(nodes, &vec![blocks; nodes.len() - 1], seed);
    run_multi_hop(&mut net, provider, &mut rng(seed), nodes, variant, params, Some(l)).expect("well-formed request")
}

fn table_one_regression() -> Verdict {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_qkdrelay"))
        .arg("eta-table")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    let direct: Vec<&str> = rows.iter().filter_map(|r| r.get(2).copied()).collect();
    let ours: Vec<&str> = rows.iter().filter_map(|r| r.get(3).copied()).collect();
    check(out.status.success(), || "eta-table failed".into())?;
    check(direct == ["4.17%", "2.94%", "2.04%"], || {
        format!("direct-kem column {direct:?}")
    })?;
    check(ours == ["100%"; 3], || format!("pqc-secured column {ours:?}"))?;
    check(elapsed < TABLE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{} / 100% in {elapsed:.0?}", direct.join(", ")))
}

fn empirical_eta_equals_analytic() -> Verdict {
    let start = Instant::now();
    let mock = MockProvider::default();
    let mut lines = Vec::new();
    let cases = [
        (Variant::Standard, KemParamSet::kem512(), 128usize),
        (Variant::PqcSecured, KemParamSet::kem512(), 128),
        (Variant::DirectKem, KemParamSet::kem512(), 256),
        (Variant::DirectKem, KemParamSet::kem768(), 256),
        (Variant::DirectKem, KemParamSet::kem1024(), 256),
    ];
    for (variant, params, unit) in cases {
        let mut reports = Vec::new();
        for seed in 0..SESSIONS_PER_VARIANT {
            // aligned lengths from one unit up to 2560 bits
            let l = unit * (1 + (seed as usize * 7) % (2560 / unit));
            let blocks = (qkdrelay::relay::otp_bits_for(variant, l, &params)).div_ceil(256);
            let out = session(&mock, &ACB, blocks, variant, &params, l, seed);
            check(out.completed(), || format!("{variant} seed {seed} did not complete"))?;
            reports.push(out.session.report(0));
        }
        let m = measured_eta(variant, &params, &reports);
        let analytic = match variant {
            Variant::DirectKem => eta_direct_kem(&params),
            _ => eta_kem_then_aes(2560),
        };
        check(m.eta == analytic && m.eta_analytic == analytic, || {
            format!("{variant}/{}: measured {} analytic {analytic}", params.name(), m.eta)
        })?;
        lines.push(format!("{variant}/{}={:.4}", params.name(), m.eta));
    }
    let elapsed = start.elapsed();
    check(elapsed < ETA_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} sessions each, |diff| = 0: {} in {elapsed:.1?}",
        SESSIONS_PER_VARIANT,
        lines.join(" ")
    ))
}

fn paris_end_to_end_rate() -> Verdict {
    let start = Instant::now();
    let topology = paris();
    let mut plan = RunPlan::new(Variant::PqcSecured, &["LIP6", "OG", "TP"], PARIS_HOURS * 3600.0);
    plan.provider = ProviderKind::Standard;
    plan.kem_params = KemParamSet::kem512();
    let ours = run_continuous(&topology, &plan).map_err(|e| e.to_string())?;
    plan.variant = Variant::DirectKem;
    let direct = run_continuous(&topology, &plan).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let r_ours = ours.stats.end_to_end_rate_bps;
    let r_direct = direct.stats.end_to_end_rate_bps;
    let rel = |r: f64, target: f64| (r - target).abs() / target;
    check(rel(r_ours, PARIS_TARGET_BPS) <= PARIS_TOLERANCE, || {
        format!("pqc-secured rate {r_ours:.2} bps")
    })?;
    check(rel(r_direct, DIRECT_TARGET_BPS) <= DIRECT_TOLERANCE, || {
        format!("direct-kem rate {r_direct:.2} bps")
    })?;
    check(elapsed < PARIS_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "pqc-secured {r_ours:.2} bps (612 ± 5%), direct-kem/KEM-512 {r_direct:.2} bps (25.5 ± 10%) in {elapsed:.1?}"
    ))
}

fn trust_model() -> Verdict {
    let params = KemParamSet::kem512();
    let (mut std_eq, mut pqc_ne, mut pqc_open, mut direct_ne) = (0, 0, 0, 0);
    for seed in 0..TRUST_SEEDS {
        let out = session(&StandardProvider, &ACB, 10, Variant::Standard, &params, 2560, seed);
        let rec = reconstruct_as_charlie(&charlie_view(&out.transcript)).map_err(|e| e.to_string())?;
        std_eq += usize::from(Some(&rec.derived) == out.session.alice_key.as_ref() && rec.is_final_key);

        let out = session(&StandardProvider, &ACB, 10, Variant::PqcSecured, &params, 2560, seed);
        let rec = reconstruct_as_charlie(&charlie_view(&out.transcript)).map_err(|e| e.to_string())?;
        let k_ab = out.session.alice_key.clone().expect("completed");
        pqc_ne += usize::from(rec.derived != k_ab && !rec.is_final_key);
        let s = &out.session;
        let opened = decrypt_with_aux(
            &StandardProvider,
            &rec.derived,
            s.k_aes.as_ref().unwrap(),
            &s.nonce.unwrap(),
            s.l,
        )
        .map_err(|e| e.to_string())?;
        pqc_open += usize::from(opened == k_ab);

        let out = session(&StandardProvider, &ACB, 24, Variant::DirectKem, &params, 256, seed);
        let rec = reconstruct_as_charlie(&charlie_view(&out.transcript)).map_err(|e| e.to_string())?;
        let k_ab = out.session.alice_key.clone().expect("completed");
        direct_ne += usize::from(rec.derived.truncate(k_ab.len()).ok() != Some(k_ab) && !rec.is_final_key);
    }
    let n = TRUST_SEEDS as usize;
    check(std_eq == n, || {
        format!("standard: charlie recovered k_AB in {std_eq}/{n}")
    })?;
    check(pqc_ne == n, || format!("pqc-secured: derived != k_AB in {pqc_ne}/{n}"))?;
    check(pqc_open == n, || {
        format!("pqc-secured: aux decryption gave k_AB in {pqc_open}/{n}")
    })?;
    check(direct_ne == n, || {
        format!("direct-kem: derived != k_AB in {direct_ne}/{n}")
    })?;
    Ok(format!(
        "{n} seeds: standard recovered {std_eq}/{n}, pqc-secured hidden {pqc_ne}/{n} and opened with k_AES {pqc_open}/{n}, direct-kem hidden {direct_ne}/{n}"
    ))
}

fn protocol_correctness() -> Verdict {
    let mock = MockProvider::default();
    let params = KemParamSet::kem512();
    let mut sessions = 0;
    for variant in Variant::ALL {
        let l = if variant == Variant::DirectKem { 512 } else { 2560 };
        for seed in 0..SESSIONS_PER_VARIANT {
            let out = session(&StandardProvider, &ACB, 48, variant, &params, l, seed);
            check(out.completed() && out.session.alice_key == out.session.bob_key, || {
                format!("{variant} seed {seed}: keys differ or aborted")
            })?;
            sessions += 1;
        }
    }
    for n in [3usize, 4, 5, 8] {
        let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let nodes: Vec<&str> = names.iter().map(String::as_str).collect();
        for seed in 0..100 {
            let out = session(&mock, &nodes, 12, Variant::PqcSecured, &params, 2560, seed);
            check(
                out.completed() && out.session.alice_key == out.session.bob_key && out.session.kem_rounds == 1,
                || format!("chain of {n}, seed {seed}"),
            )?;
            sessions += 1;
        }
    }
    // abort iff some hop holds no key
    for variant in Variant::ALL {
        for ac in 0..4 {
            for cb in 0..4 {
                let mut net = acb_net(ac, cb, 0);
                let l = if variant == Variant::DirectKem { 256 } else { 128 };
                let out = run_multi_hop(&mut net, &mock, &mut rng(0), &ACB, variant, &params, Some(l)).unwrap();
                let aborted = matches!(out.session.status, SessionStatus::Aborted(_));
                let zero = ac == 0 || cb == 0;
                // direct KEM additionally needs 24 blocks for one ciphertext
                check(aborted == (zero || variant == Variant::DirectKem), || {
                    format!("{variant} ({ac}, {cb}) aborted={aborted}")
                })?;
                check(
                    !aborted || (out.session.alice_key.is_none() && out.session.bob_key.is_none()),
                    || "key released after abort".into(),
                )?;
            }
        }
    }
    // single-use audit over one long-lived network
    let mut net = acb_net(4000, 4000, 1);
    let mut r = rng(1);
    let mut seen: HashSet<Uuid> = HashSet::new();
    let mut double = 0;
    for i in 0..300 {
        let variant = Variant::ALL[i % 3];
        let l = if variant == Variant::DirectKem { 256 } else { 1000 + i };
        let out = run_multi_hop(&mut net, &mock, &mut r, &ACB, variant, &params, Some(l)).unwrap();
        for id in out.session.hop_keys.iter().flat_map(|h| &h.key_ids) {
            double += usize::from(!seen.insert(*id));
        }
    }
    for link in net.links() {
        let l = link.store.ledger();
        check(
            l.produced_bits == l.served_bits + link.store.bits_in_store() + l.residue_bits + l.dropped_bits,
            || format!("ledger of {} does not balance", link.config.link_id),
        )?;
    }
    check(double == 0, || format!("{double} blocks served twice"))?;
    Ok(format!(
        "{sessions} sessions with equal keys (chains of 3, 4, 5, 8 included), abort iff empty hop, {} blocks audited, 0 double-served",
        seen.len()
    ))
}

fn algebraic_oracles() -> Verdict {
    let mock = MockProvider::default();
    let params = KemParamSet::kem512();
    let mut replays = 0;
    for seed in 0..SESSIONS_PER_VARIANT {
        let l = 1 + (seed as usize * 37) % 2560;
        let out = session(&mock, &ACB, 10, Variant::Standard, &params, l, seed);
        let t = &out.transcript;
        let body = |k| t.find(k).and_then(|m| m.body_register()).ok_or("missing payload");
        let m1 = body(MessageKind::Payload(1))?;
        let m2 = body(MessageKind::Payload(2))?;
        let charlie = t.node_state("charlie").ok_or("missing charlie state")?;
        let k_ac = charlie.qkd_key_with("alice").unwrap().truncate(l).unwrap();
        let k_bc = charlie.qkd_key_with("bob").unwrap().truncate(l).unwrap();
        let payload = t
            .node_state("alice")
            .and_then(|s| s.secrets.get("k_AB"))
            .ok_or("missing k_AB")?;
        check(&m1.xor(&k_ac).unwrap() == payload, || {
            format!("m1 ^ k_AC != payload, seed {seed}")
        })?;
        check(m1.xor(&m2).unwrap() == k_ac.xor(&k_bc).unwrap(), || {
            format!("m1 ^ m2 != k_AC ^ k_BC, seed {seed}")
        })?;
        replays += 1;
    }
    let mut r = rng(99);
    for len in 0..=EXHAUSTIVE_MAX_LEN {
        let a = random_register(len, &mut r);
        let b = random_register(len, &mut r);
        let c = random_register(len, &mut r);
        let x = |p: &KeyRegister, q: &KeyRegister| p.xor(q).unwrap();
        check(x(&x(&a, &b), &c) == x(&a, &x(&b, &c)), || {
            format!("associativity at {len}")
        })?;
        check(x(&x(&a, &b), &b) == a && x(&a, &a).is_all_zero(), || {
            format!("self-inverse at {len}")
        })?;
        for i in 0..=len {
            let t = a.truncate(i).unwrap();
            check(t.truncate(i / 2).unwrap() == a.truncate(i / 2).unwrap(), || {
                format!("prefix {i}/{len}")
            })?;
        }
        for block in [128, 256] {
            check(a.pad(block).unwrap().unpad(len, block).unwrap() == a, || {
                format!("pad round trip at {len}")
            })?;
        }
    }
    Ok(format!(
        "{replays} standard transcripts replayed; XOR/truncate/pad laws hold for every length 0..={EXHAUSTIVE_MAX_LEN}"
    ))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let mut plan = RunPlan::new(Variant::PqcSecured, &["LIP6", "OG", "TP"], 600.0);
        plan.seed = 2024;
        plan.capture_transcripts = true;
        let s = run_continuous(&paris(), &plan).map_err(|e| e.to_string())?;
        let csv = dir.path().join(format!("{run}.csv"));
        let jsonl = dir.path().join(format!("{run}.jsonl"));
        let mut buf = Vec::new();
        write_telemetry_csv(&s.telemetry, &mut buf).map_err(|e| e.to_string())?;
        std::fs::write(&csv, buf).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        for t in &s.transcripts {
            t.write_jsonl(&mut buf).map_err(|e| e.to_string())?;
        }
        std::fs::write(&jsonl, buf).map_err(|e| e.to_string())?;
        files.push((std::fs::read(csv).unwrap(), std::fs::read(jsonl).unwrap()));
    }
    check(!files[0].1.is_empty(), || "no transcripts captured".into())?;
    check(files[0].0 == files[1].0, || "telemetry CSVs differ".into())?;
    check(files[0].1 == files[1].1, || "transcript files differ".into())?;
    Ok(format!(
        "telemetry ({} bytes) and transcripts ({} bytes) byte-identical across runs",
        files[0].0.len(),
        files[0].1.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("efficiency table regression", table_one_regression),
        ("empirical eta equals analytic eta", empirical_eta_equals_analytic),
        ("Paris end-to-end rate", paris_end_to_end_rate),
        ("trust model", trust_model),
        ("protocol correctness", protocol_correctness),
        ("algebraic oracles", algebraic_oracles),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
