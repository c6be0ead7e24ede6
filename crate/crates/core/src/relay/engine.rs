use std::collections::{BTreeMap, HashSet};

use super::transcript::{HeldQkdKey, MessageKind, NodeSnapshot, Role, SessionTranscript, TranscriptHeader};
use super::{
    final_length_for, negotiate_hops, otp_bits_for, AbortReason, AesSessionKey, RelayError, RelayRequest, RelaySession,
    SessionStatus, Variant,
};
use crate::audit::HonestyLevel;
use crate::cryptoseal::{CryptoError, CryptoProvider, KemParamSet, KemPublicKey, KemSecretKey, Nonce};
use crate::keycore::{random_register, KeyRegister, CIPHER_BLOCK_BITS};
use crate::qkdsim::QkdNetwork;
use crate::SimRng;

/// A finished (completed or aborted) session with its transcript.
#[derive(Debug, Clone)]
pub struct RelayOutcome {
    pub session: RelaySession,
    pub transcript: SessionTranscript,
    /// AES key of the KEM round, for reuse by later sessions.
    pub aes_key: Option<AesSessionKey>,
}

impl RelayOutcome {
    pub fn completed(&self) -> bool {
        self.session.completed()
    }
}

struct Party {
    node: String,
    role: Role,
    honesty: HonestyLevel,
    qkd_keys: Vec<HeldQkdKey>,
    secrets: BTreeMap<String, KeyRegister>,
}

impl Party {
    fn qkd_key_with(&self, peer: &str) -> &KeyRegister {
        &self
            .qkd_keys
            .iter()
            .find(|k| k.peer == peer)
            .expect("hop key reserved before payloads flow")
            .key
    }

    fn snapshot(&self) -> NodeSnapshot {
        NodeSnapshot {
            node: self.node.clone(),
            role: self.role,
            honesty: self.honesty,
            qkd_keys: self.qkd_keys.clone(),
            secrets: self.secrets.clone(),
        }
    }
}

struct Run<'a> {
    provider: &'a dyn CryptoProvider,
    transcript: SessionTranscript,
    parties: Vec<Party>,
    session: RelaySession,
    bob_secret_key: Option<KemSecretKey>,
}

impl Run<'_> {
    fn alice(&self) -> &str {
        &self.session.chain[0]
    }

    fn bob(&self) -> &str {
        self.session.chain.last().expect("validated chain")
    }

    /// Sends and returns the body as the receiver sees it.
    fn send(&mut self, from: &str, to: &str, kind: MessageKind, body: Vec<u8>) -> Vec<u8> {
        self.transcript.send(from, to, kind, body).body.clone()
    }

    fn send_register(&mut self, from: &str, to: &str, kind: MessageKind, reg: &KeyRegister) -> KeyRegister {
        let body = self.send(from, to, kind, reg.to_canonical_bytes());
        KeyRegister::from_canonical_bytes(&body).expect("canonical encoding round-trips")
    }

    fn finish(mut self, status: SessionStatus, aes_key: Option<AesSessionKey>) -> RelayOutcome {
        if let SessionStatus::Aborted(reason) = &status {
            let alice = self.alice().to_string();
            let others = self.session.chain[1..].to_vec();
            for node in &others {
                self.send(&alice, node, MessageKind::Abort, reason.code().as_bytes().to_vec());
            }
            self.session.alice_key = None;
            self.session.bob_key = None;
        }
        self.session.status = status;
        for p in &self.parties {
            self.transcript.record_state(p.snapshot());
        }
        RelayOutcome {
            session: self.session,
            transcript: self.transcript,
            aes_key,
        }
    }

    fn abort(self, reason: AbortReason) -> RelayOutcome {
        self.finish(SessionStatus::Aborted(reason), None)
    }

    fn provider_abort(self, e: CryptoError) -> RelayOutcome {
        self.abort(AbortReason::ProviderFailure(e.to_string()))
    }

    /// Bob generates a key pair and sends the public key to Alice.
    fn kem_keygen(&mut self, params: &KemParamSet, rng: &mut SimRng) -> Result<KemPublicKey, CryptoError> {
        let pair = self.provider.kem_keygen(params, rng)?;
        let last = self.parties.len() - 1;
        self.parties[last].secrets.insert(
            "kem_sk".into(),
            KeyRegister::from_byte_vec(pair.secret_key.bytes.clone()),
        );
        let (alice, bob) = (self.alice().to_string(), self.bob().to_string());
        let body = self.send(&bob, &alice, MessageKind::KemPublicKey, pair.public_key.bytes.clone());
        self.bob_secret_key = Some(pair.secret_key);
        Ok(KemPublicKey {
            params: params.clone(),
            bytes: body,
        })
    }

    fn kem_round(&mut self, params: &KemParamSet, rng: &mut SimRng) -> Result<AesSessionKey, CryptoError> {
        let pk = self.kem_keygen(params, rng)?;
        let enc = self.provider.kem_encapsulate(&pk, rng)?;
        let (alice, bob) = (self.alice().to_string(), self.bob().to_string());
        let ct = self.send_register(&alice, &bob, MessageKind::KemCiphertext, &enc.ciphertext);
        let sk = self.bob_secret_key.as_ref().expect("generated above");
        let bob_key = self.provider.kem_decapsulate(sk, &ct)?;
        Ok(AesSessionKey {
            alice: enc.shared_key,
            bob: bob_key,
            kem_ciphertext: ct,
        })
    }
}

/// Runs one relay session over `req.chain`.
///
/// Alice (first node) coordinates: she collects every hop's offered length,
/// aborts if any hop offers nothing, fixes the final length and sends the
/// OTP-protected payload hop by hop. Each intermediary removes its inbound
/// pad and applies its outbound pad. Bob (last node) removes the final pad
/// and, depending on the variant, decrypts or decapsulates.
///
/// Aborts are reported through [`SessionStatus::Aborted`]; `Err` is reserved
/// for malformed requests.
pub fn run_relay(
    net: &mut QkdNetwork,
    provider: &dyn CryptoProvider,
    rng: &mut SimRng,
    req: &RelayRequest,
) -> Result<RelayOutcome, RelayError> {
    let chain = &req.chain;
    let n = chain.len();
    if n < 3 {
        return Err(RelayError::ChainTooShort(n));
    }
    let mut seen = HashSet::new();
    for node in chain {
        if !seen.insert(node.as_str()) {
            return Err(RelayError::RepeatedNode(node.clone()));
        }
    }
    if !req.honesty.is_empty() && req.honesty.len() != n {
        return Err(RelayError::HonestyLength {
            got: req.honesty.len(),
            chain: n,
        });
    }
    let link_idx = chain
        .windows(2)
        .map(|w| {
            net.link_index(&w[0], &w[1])
                .ok_or_else(|| crate::qkdsim::SimError::NoLink(w[0].clone(), w[1].clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let link_ids: Vec<String> = link_idx
        .iter()
        .map(|&i| net.links()[i].config.link_id.clone())
        .collect();

    let variant = req.variant;
    let params = &req.kem_params;
    let parties = chain
        .iter()
        .enumerate()
        .map(|(i, node)| Party {
            node: node.clone(),
            role: match i {
                0 => Role::Alice,
                i if i == n - 1 => Role::Bob,
                _ => Role::Intermediary,
            },
            honesty: req.honesty_of(i),
            qkd_keys: Vec::new(),
            secrets: BTreeMap::new(),
        })
        .collect();
    let header = TranscriptHeader {
        session_id: req.session_id,
        variant,
        chain: chain.clone(),
        kem_params: (variant != Variant::Standard).then(|| params.name().to_string()),
        provider: provider.name().to_string(),
    };
    let mut run = Run {
        provider,
        transcript: SessionTranscript::new(header),
        parties,
        session: RelaySession {
            session_id: req.session_id,
            variant,
            chain: chain.clone(),
            link_ids: link_ids.clone(),
            hop_offers: Vec::new(),
            l: 0,
            otp_bits: 0,
            hop_keys: Vec::new(),
            alice_key: None,
            bob_key: None,
            k_aes: None,
            k_enc_ab: None,
            kem_ct: None,
            nonce: None,
            messages: Vec::new(),
            kem_rounds: 0,
            status: SessionStatus::Running,
        },
        bob_secret_key: None,
    };
    let alice = chain[0].clone();
    let bob = chain[n - 1].clone();

    // KEM round (or key reuse) for the AES layer; Bob's key pair for direct KEM.
    let mut aes_key = None;
    let mut bob_pk = None;
    match variant {
        Variant::Standard => {}
        Variant::PqcSecured => {
            let key = match &req.reuse_aes_key {
                Some(k) => k.clone(),
                None => match run.kem_round(params, rng) {
                    Ok(k) => {
                        run.session.kem_rounds = 1;
                        k
                    }
                    Err(e) => return Ok(run.provider_abort(e)),
                },
            };
            run.session.k_aes = Some(key.alice.clone());
            run.session.kem_ct = Some(key.kem_ciphertext.clone());
            run.parties[0].secrets.insert("k_AES".into(), key.alice.clone());
            run.parties[n - 1].secrets.insert("k_AES".into(), key.bob.clone());
            aes_key = Some(key);
        }
        Variant::DirectKem => match run.kem_keygen(params, rng) {
            Ok(pk) => bob_pk = Some(pk),
            Err(e) => return Ok(run.provider_abort(e)),
        },
    }

    // Each hop offers what its store holds, capped at what the target needs.
    let cap = req.target_bits.map(|t| otp_bits_for(variant, t, params));
    let offers: Vec<usize> = link_idx
        .iter()
        .map(|&i| {
            let avail = net.links()[i].store.available_bits();
            cap.map_or(avail, |c| avail.min(c))
        })
        .collect();
    run.session.hop_offers = offers.clone();
    for j in 1..n - 1 {
        let announcer = chain[j + 1].clone();
        run.send(
            &announcer,
            &alice,
            MessageKind::LengthAnnounce,
            (offers[j] as u64).to_be_bytes().to_vec(),
        );
    }
    let otp_budget = match negotiate_hops(&offers) {
        Ok(l) => l,
        Err(reason) => return Ok(run.abort(reason)),
    };
    let l = final_length_for(variant, otp_budget, req.target_bits, params);
    if l == 0 {
        return Ok(run.abort(AbortReason::InsufficientKey));
    }
    let otp = otp_bits_for(variant, l, params);
    run.session.l = l;
    run.session.otp_bits = otp;
    for node in &chain[1..] {
        run.send(
            &alice,
            node,
            MessageKind::LengthDecision,
            (l as u64).to_be_bytes().to_vec(),
        );
    }

    for (j, &i) in link_idx.iter().enumerate() {
        let reservation = net.links_mut()[i].store.reserve(otp)?;
        for (me, peer) in [(j, j + 1), (j + 1, j)] {
            let held = HeldQkdKey {
                link_id: link_ids[j].clone(),
                peer: chain[peer].clone(),
                key: reservation.material.clone(),
            };
            run.parties[me].qkd_keys.push(held);
        }
        run.session.hop_keys.push(reservation);
    }

    // Alice builds the payload.
    let (k_ab, payload) = match variant {
        Variant::Standard => {
            let k = random_register(l, rng);
            (k.clone(), k)
        }
        Variant::PqcSecured => {
            let k = random_register(l, rng);
            let nonce = Nonce::random(rng);
            run.send(&alice, &bob, MessageKind::NonceAnnounce, nonce.0.to_vec());
            run.session.nonce = Some(nonce);
            let key = &aes_key.as_ref().expect("set for this variant").alice;
            let enc = match provider.sym_encrypt(key, &nonce, &k) {
                Ok(c) => c,
                Err(e) => return Ok(run.provider_abort(e)),
            };
            run.parties[0].secrets.insert("k_enc_AB".into(), enc.clone());
            run.session.k_enc_ab = Some(enc.clone());
            (k, enc)
        }
        Variant::DirectKem => {
            let pk = bob_pk.as_ref().expect("set for this variant");
            let mut keys = KeyRegister::empty();
            let mut cts = KeyRegister::empty();
            for _ in 0..l.div_ceil(crate::keycore::KEY_BLOCK_BITS) {
                match provider.kem_encapsulate(pk, rng) {
                    Ok(enc) => {
                        keys.extend(&enc.shared_key);
                        cts.extend(&enc.ciphertext);
                        run.session.kem_rounds += 1;
                    }
                    Err(e) => return Ok(run.provider_abort(e)),
                }
            }
            run.session.kem_ct = Some(cts.clone());
            (keys.truncate(l).map_err(RelayError::Key)?, cts)
        }
    };
    debug_assert_eq!(payload.len(), otp);
    run.parties[0].secrets.insert("k_AB".into(), k_ab.clone());
    run.session.alice_key = Some(k_ab);

    // Hop-by-hop OTP forwarding.
    let pad = run.parties[0].qkd_key_with(&chain[1]).clone();
    let m1 = payload.xor(&pad).map_err(RelayError::Key)?;
    run.session.messages.push(m1.clone());
    let mut incoming = run.send_register(&alice, &chain[1], MessageKind::Payload(1), &m1);
    for j in 1..n - 1 {
        let inner = incoming
            .xor(run.parties[j].qkd_key_with(&chain[j - 1]))
            .map_err(RelayError::Key)?;
        let out = inner
            .xor(run.parties[j].qkd_key_with(&chain[j + 1]))
            .map_err(RelayError::Key)?;
        run.session.messages.push(out.clone());
        let (from, to) = (chain[j].clone(), chain[j + 1].clone());
        incoming = run.send_register(&from, &to, MessageKind::Payload(j as u32 + 1), &out);
    }
    let inner = incoming
        .xor(run.parties[n - 1].qkd_key_with(&chain[n - 2]))
        .map_err(RelayError::Key)?;

    // Bob recovers the final key.
    let bob_key = match variant {
        Variant::Standard => inner,
        Variant::PqcSecured => {
            let nonce_body = &run
                .transcript
                .find(MessageKind::NonceAnnounce)
                .expect("nonce announced")
                .body;
            let nonce = Nonce(nonce_body.as_slice().try_into().expect("16-byte nonce"));
            run.parties[n - 1].secrets.insert("k_enc_AB".into(), inner.clone());
            let key = &aes_key.as_ref().expect("set for this variant").bob;
            match provider.sym_decrypt(key, &nonce, &inner) {
                Ok(padded) => padded.unpad(l, CIPHER_BLOCK_BITS).map_err(RelayError::Key)?,
                Err(e) => return Ok(run.provider_abort(e)),
            }
        }
        Variant::DirectKem => {
            let sk = run.bob_secret_key.clone().expect("generated above");
            let l_ct = params.ciphertext_bits();
            let mut keys = KeyRegister::empty();
            for s in 0..inner.len() / l_ct {
                let ct = inner.slice(s * l_ct, (s + 1) * l_ct).map_err(RelayError::Key)?;
                match provider.kem_decapsulate(&sk, &ct) {
                    Ok(k) => keys.extend(&k),
                    Err(e) => return Ok(run.provider_abort(e)),
                }
            }
            keys.truncate(l).map_err(RelayError::Key)?
        }
    };
    run.parties[n - 1].secrets.insert("k_AB".into(), bob_key.clone());
    run.session.bob_key = Some(bob_key);
    Ok(run.finish(SessionStatus::Completed, aes_key))
}

fn three(chain: [&str; 3]) -> Vec<String> {
    chain.iter().map(|s| s.to_string()).collect()
}

/// Plain OTP relay over `[alice, charlie, bob]`.
pub fn run_standard(
    net: &mut QkdNetwork,
    provider: &dyn CryptoProvider,
    rng: &mut SimRng,
    chain: [&str; 3],
    target_bits: Option<usize>,
) -> Result<RelayOutcome, RelayError> {
    let mut req = RelayRequest::new(Variant::Standard, &[]);
    req.chain = three(chain);
    req.target_bits = target_bits;
    run_relay(net, provider, rng, &req)
}

/// KEM + AES secured relay over `[alice, charlie, bob]`.
pub fn run_pqc_secured(
    net: &mut QkdNetwork,
    provider: &dyn CryptoProvider,
    rng: &mut SimRng,
    chain: [&str; 3],
    params: &KemParamSet,
    target_bits: Option<usize>,
) -> Result<RelayOutcome, RelayError> {
    let mut req = RelayRequest::new(Variant::PqcSecured, &[]).with_params(params.clone());
    req.chain = three(chain);
    req.target_bits = target_bits;
    run_relay(net, provider, rng, &req)
}

/// Relay of KEM ciphertexts, one encapsulation per 256 bits of final key.
pub fn run_direct_kem(
    net: &mut QkdNetwork,
    provider: &dyn CryptoProvider,
    rng: &mut SimRng,
    chain: [&str; 3],
    params: &KemParamSet,
    target_bits: Option<usize>,
) -> Result<RelayOutcome, RelayError> {
    let mut req = RelayRequest::new(Variant::DirectKem, &[]).with_params(params.clone());
    req.chain = three(chain);
    req.target_bits = target_bits;
    run_relay(net, provider, rng, &req)
}

/// Relay over an arbitrary chain of at least three nodes.
pub fn run_multi_hop(
    net: &mut QkdNetwork,
    provider: &dyn CryptoProvider,
    rng: &mut SimRng,
    chain: &[&str],
    variant: Variant,
    params: &KemParamSet,
    target_bits: Option<usize>,
) -> Result<RelayOutcome, RelayError> {
    let mut req = RelayRequest::new(variant, chain).with_params(params.clone());
    req.target_bits = target_bits;
    run_relay(net, provider, rng, &req)
}
