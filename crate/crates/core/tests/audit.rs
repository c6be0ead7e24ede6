mod common;

use common::{acb_net, chain_net, rng, ACB};
use qkdrelay::audit::{
    audit_transcript, charlie_view, decrypt_with_aux, eve_view, exposes_final_key, reconstruct_as_charlie,
    reconstruct_at, required_breaks, Attacker, AuditError, HonestyLevel,
};
use qkdrelay::cryptoseal::{KemParamSet, StandardProvider};
use qkdrelay::relay::{
    run_direct_kem, run_multi_hop, run_pqc_secured, run_standard, MessageKind, RelayOutcome, SessionTranscript,
    TranscriptHeader, Variant,
};

fn session(variant: Variant, seed: u64) -> RelayOutcome {
    let mut net = acb_net(40, 40, seed);
    let mut r = rng(seed);
    let p = KemParamSet::kem512();
    match variant {
        Variant::Standard => run_standard(&mut net, &StandardProvider, &mut r, ACB, Some(1024)),
        Variant::PqcSecured => run_pqc_secured(&mut net, &StandardProvider, &mut r, ACB, &p, Some(1024)),
        Variant::DirectKem => run_direct_kem(&mut net, &StandardProvider, &mut r, ACB, &p, Some(512)),
    }
    .unwrap()
}

#[test]
fn charlie_view_is_exactly_his_channels() {
    let out = session(Variant::PqcSecured, 1);
    let view = charlie_view(&out.transcript);
    assert_eq!(view.observer, "charlie");
    assert!(view.messages.iter().all(|m| m.touches("charlie")));
    let kinds: Vec<MessageKind> = view.messages.iter().map(|m| m.kind).collect();
    assert_eq!(
        kinds,
        [
            MessageKind::LengthDecision,
            MessageKind::Payload(1),
            MessageKind::Payload(2)
        ]
    );
    assert_eq!(view.private_state.len(), 1);
    assert_eq!(view.private_state[0].node, "charlie");
    assert_eq!(view.private_state[0].honesty, HonestyLevel::HonestButCurious);
    assert!(!view.messages.iter().any(|m| m.kind == MessageKind::KemCiphertext));
}

#[test]
fn empty_transcript_gives_empty_view() {
    let t = SessionTranscript::new(TranscriptHeader {
        session_id: 0,
        variant: Variant::Standard,
        chain: Vec::new(),
        kem_params: None,
        provider: "mock".into(),
    });
    let view = charlie_view(&t);
    assert!(view.is_empty());
    assert!(matches!(reconstruct_as_charlie(&view), Err(AuditError::NoPayload(_))));
}

#[test]
fn trust_table_over_many_seeds() {
    for seed in 0..200 {
        let std = session(Variant::Standard, seed);
        let rec = reconstruct_as_charlie(&charlie_view(&std.transcript)).unwrap();
        assert!(rec.is_final_key);
        assert_eq!(Some(rec.derived), std.session.alice_key);

        let pqc = session(Variant::PqcSecured, seed);
        let rec = reconstruct_as_charlie(&charlie_view(&pqc.transcript)).unwrap();
        let k_ab = pqc.session.alice_key.clone().unwrap();
        assert!(!rec.is_final_key);
        assert_ne!(rec.derived, k_ab);
        let s = &pqc.session;
        let opened = decrypt_with_aux(
            &StandardProvider,
            &rec.derived,
            s.k_aes.as_ref().unwrap(),
            &s.nonce.unwrap(),
            s.l,
        )
        .unwrap();
        assert_eq!(opened, k_ab);

        let direct = session(Variant::DirectKem, seed);
        let rec = reconstruct_as_charlie(&charlie_view(&direct.transcript)).unwrap();
        assert_ne!(
            rec.derived.truncate(512).unwrap(),
            direct.session.alice_key.clone().unwrap()
        );
    }
}

#[test]
fn eve_without_break_ins_finds_no_direct_path() {
    for variant in Variant::ALL {
        for seed in 0..50 {
            let out = session(variant, seed);
            let k = out.session.alice_key.clone().unwrap();
            let eve = eve_view(&out.transcript, &[]);
            assert!(eve.private_state.is_empty());
            assert_eq!(eve.messages.len(), out.transcript.messages().len());
            assert!(!exposes_final_key(&eve, &k), "{variant} seed {seed}");
        }
    }
}

#[test]
fn eve_at_the_relay_is_charlie() {
    let out = session(Variant::Standard, 3);
    let k = out.session.alice_key.clone().unwrap();
    let eve = eve_view(&out.transcript, &["charlie"]);
    assert!(exposes_final_key(&eve, &k));
    assert_eq!(reconstruct_at(&eve, "charlie").unwrap().derived, k);
    let out = session(Variant::PqcSecured, 3);
    let eve = eve_view(&out.transcript, &["charlie"]);
    assert!(!exposes_final_key(&eve, out.session.alice_key.as_ref().unwrap()));
}

#[test]
fn audit_reports() {
    let std = audit_transcript(&session(Variant::Standard, 9).transcript, Attacker::Charlie, &[]);
    assert_eq!(std.derived_equals_final_key, Some(true));
    assert_eq!(std.exposes_final_key, Some(true));
    assert_eq!(std.must_break, "Nothing");
    let pqc = audit_transcript(&session(Variant::PqcSecured, 9).transcript, Attacker::Charlie, &[]);
    assert_eq!(pqc.derived_equals_final_key, Some(false));
    assert_eq!(pqc.exposes_final_key, Some(false));
    assert_eq!(
        pqc.must_break,
        required_breaks(Variant::PqcSecured, Attacker::Charlie).to_string()
    );
    let eve = audit_transcript(&session(Variant::DirectKem, 9).transcript, Attacker::Eve, &[]);
    assert_eq!(eve.derived_bits, None);
    assert_eq!(eve.must_break, "OTP+QKD and PQC-KEM");
}

#[test]
fn every_intermediary_sees_only_ciphertext() {
    let nodes = ["a", "r1", "r2", "r3", "b"];
    let mut net = chain_net(&nodes, &[20; 4], 4);
    let out = run_multi_hop(
        &mut net,
        &StandardProvider,
        &mut rng(4),
        &nodes,
        Variant::PqcSecured,
        &KemParamSet::kem1024(),
        Some(2048),
    )
    .unwrap();
    let k_ab = out.session.alice_key.clone().unwrap();
    for mid in &nodes[1..4] {
        let view = qkdrelay::audit::node_view(&out.transcript, mid);
        assert!(!exposes_final_key(&view, &k_ab));
        let rec = reconstruct_at(&view, mid).unwrap();
        assert_eq!(Some(&rec.derived), out.session.k_enc_ab.as_ref());
    }
}
