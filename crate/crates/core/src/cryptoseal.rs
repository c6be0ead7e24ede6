//! KEM and symmetric-cipher providers.
//!
//! Relay code talks to a [`CryptoProvider`] only. Two providers ship:
//!
//! * [`MockProvider`]: deterministic hash-based stand-ins with the exact
//!   ciphertext geometry of the built-in parameter sets. No cryptographic
//!   strength is claimed. Custom parameter sets are supported.
//! * [`StandardProvider`]: ML-KEM (FIPS 203) and AES-256 in counter mode.
//!
//! Both symmetric constructions are length preserving over 128-bit aligned
//! input, so the relayed ciphertext costs exactly as many OTP bits as the key
//! it protects.

use std::fmt;
use std::str::FromStr;

use aes::cipher::{KeyIvInit, StreamCipher};
use ml_kem::kem::{Decapsulate, Encapsulate};
use ml_kem::{EncodedSizeUser, KemCore, MlKem1024, MlKem512, MlKem768};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::keycore::{random_register, KeyError, KeyRegister, CIPHER_BLOCK_BITS};
use crate::SimRng;

/// Bits of key material produced by one encapsulation.
pub const KEM_SHARED_KEY_BITS: usize = 256;
pub const SYM_KEY_BITS: usize = 256;
pub const NONCE_BITS: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unsupported KEM parameter set {0}")]
    UnsupportedParams(String),
    #[error("malformed public key")]
    MalformedPublicKey,
    #[error("malformed secret key")]
    MalformedSecretKey,
    #[error("ciphertext is {actual} bits, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("decapsulation failed")]
    DecapsulationFailure,
    #[error("symmetric key must be 256 bits, got {0}")]
    BadKeyLength(usize),
    #[error("symmetric ciphertext of {0} bits is not block aligned")]
    Unaligned(usize),
    #[error(transparent)]
    Key(#[from] KeyError),
}

/// A named KEM parameter set. Only the ciphertext geometry matters to the relay.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KemParamSet {
    name: String,
    ciphertext_bits: usize,
}

impl KemParamSet {
    pub fn kem512() -> Self {
        Self {
            name: "KEM-512".into(),
            ciphertext_bits: 6144,
        }
    }

    pub fn kem768() -> Self {
        Self {
            name: "KEM-768".into(),
            ciphertext_bits: 8704,
        }
    }

    pub fn kem1024() -> Self {
        Self {
            name: "KEM-1024".into(),
            ciphertext_bits: 12544,
        }
    }

    pub fn builtin() -> [KemParamSet; 3] {
        [Self::kem512(), Self::kem768(), Self::kem1024()]
    }

    /// A non-standard set; only the mock provider can run it.
    pub fn custom(name: impl Into<String>, ciphertext_bits: usize) -> Result<Self, CryptoError> {
        let name = name.into();
        if ciphertext_bits < KEM_SHARED_KEY_BITS || Self::builtin().iter().any(|p| p.name == name) {
            return Err(CryptoError::UnsupportedParams(name));
        }
        Ok(Self { name, ciphertext_bits })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_key_bits(&self) -> usize {
        KEM_SHARED_KEY_BITS
    }

    /// Ciphertext length `l_ct` in bits.
    pub fn ciphertext_bits(&self) -> usize {
        self.ciphertext_bits
    }

    pub fn is_builtin(&self) -> bool {
        Self::builtin().contains(self)
    }
}

impl fmt::Display for KemParamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for KemParamSet {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::builtin()
            .into_iter()
            .find(|p| p.name.eq_ignore_ascii_case(s))
            .ok_or_else(|| CryptoError::UnsupportedParams(s.to_string()))
    }
}

impl Serialize for KemParamSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name)
    }
}

impl<'de> Deserialize<'de> for KemParamSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Geometry of the symmetric layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CipherSpec {
    pub key_bits: usize,
    pub block_bits: usize,
    pub mode: &'static str,
    pub nonce_bits: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Nonce(pub [u8; 16]);

impl Nonce {
    pub fn random(rng: &mut SimRng) -> Self {
        let mut n = [0u8; 16];
        rng.fill_bytes(&mut n);
        Self(n)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemPublicKey {
    pub params: KemParamSet,
    pub bytes: Vec<u8>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct KemSecretKey {
    pub params: KemParamSet,
    pub bytes: Vec<u8>,
}

impl fmt::Debug for KemSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KemSecretKey({}, {} bytes)", self.params, self.bytes.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemKeyPair {
    pub public_key: KemPublicKey,
    pub secret_key: KemSecretKey,
}

impl KemKeyPair {
    pub fn params(&self) -> &KemParamSet {
        &self.public_key.params
    }
}

/// Encapsulation output: `l_ct`-bit ciphertext and 256-bit shared key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encapsulated {
    pub ciphertext: KeyRegister,
    pub shared_key: KeyRegister,
}

pub trait CryptoProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn kem_keygen(&self, params: &KemParamSet, rng: &mut SimRng) -> Result<KemKeyPair, CryptoError>;

    fn kem_encapsulate(&self, pk: &KemPublicKey, rng: &mut SimRng) -> Result<Encapsulated, CryptoError>;

    fn kem_decapsulate(&self, sk: &KemSecretKey, ciphertext: &KeyRegister) -> Result<KeyRegister, CryptoError>;

    /// XORs the keystream for `(key, nonce)` into `data` in place.
    fn apply_keystream(&self, key: &[u8; 32], nonce: &Nonce, data: &mut [u8]);

    fn cipher_spec(&self) -> CipherSpec;

    /// Pads `plaintext` with zeros to a 128-bit boundary and encrypts it.
    /// The ciphertext has the padded length.
    fn sym_encrypt(
        &self,
        key: &KeyRegister,
        nonce: &Nonce,
        plaintext: &KeyRegister,
    ) -> Result<KeyRegister, CryptoError> {
        let key = sym_key_bytes(key)?;
        let padded = plaintext.pad(CIPHER_BLOCK_BITS)?;
        let mut data = padded.as_bytes().to_vec();
        self.apply_keystream(&key, nonce, &mut data);
        Ok(KeyRegister::from_byte_vec(data))
    }

    /// Inverse of `sym_encrypt`; returns the padded plaintext.
    fn sym_decrypt(
        &self,
        key: &KeyRegister,
        nonce: &Nonce,
        ciphertext: &KeyRegister,
    ) -> Result<KeyRegister, CryptoError> {
        let key = sym_key_bytes(key)?;
        if !ciphertext.len().is_multiple_of(CIPHER_BLOCK_BITS) {
            return Err(CryptoError::Unaligned(ciphertext.len()));
        }
        let mut data = ciphertext.as_bytes().to_vec();
        self.apply_keystream(&key, nonce, &mut data);
        Ok(KeyRegister::from_byte_vec(data))
    }
}

fn sym_key_bytes(key: &KeyRegister) -> Result<[u8; 32], CryptoError> {
    if key.len() != SYM_KEY_BITS {
        return Err(CryptoError::BadKeyLength(key.len()));
    }
    Ok(key.as_bytes().try_into().expect("256-bit key"))
}

fn check_ct_len(params: &KemParamSet, ct: &KeyRegister) -> Result<(), CryptoError> {
    if ct.len() != params.ciphertext_bits() {
        return Err(CryptoError::LengthMismatch {
            expected: params.ciphertext_bits(),
            actual: ct.len(),
        });
    }
    Ok(())
}

/// Selects a provider by its stable name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Standard,
}

impl ProviderKind {
    pub fn build(self) -> Box<dyn CryptoProvider> {
        match self {
            ProviderKind::Mock => Box::new(MockProvider::default()),
            ProviderKind::Standard => Box::new(StandardProvider),
        }
    }
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "standard" | "ml-kem" => Ok(Self::Standard),
            other => Err(format!("unknown provider {other:?} (expected mock or standard)")),
        }
    }
}

// ---------------------------------------------------------------------------
// Mock provider
// ---------------------------------------------------------------------------

const MOCK_PK_DOMAIN: &[u8] = b"qkdrelay/mock-kem/pk";
const MOCK_MASK_DOMAIN: &[u8] = b"qkdrelay/mock-kem/mask";
const MOCK_TAIL_DOMAIN: &[u8] = b"qkdrelay/mock-kem/tail";
const MOCK_STREAM_DOMAIN: &[u8] = b"qkdrelay/mock-stream";

/// Hash-based provider with correct geometry and no security.
///
/// A secret key is a 32-byte seed; the public key is its digest. The first 256
/// bits of a ciphertext carry the shared key masked by a digest of the public
/// key and the remaining `l_ct - 256` bits are a stream bound to the public
/// key and the shared key. Decapsulating with the wrong secret key yields an
/// unrelated key, or [`CryptoError::DecapsulationFailure`] when `check_tag`
/// is set.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider {
    pub check_tag: bool,
}

impl MockProvider {
    pub fn with_tag_check() -> Self {
        Self { check_tag: true }
    }

    fn public_from_seed(seed: &[u8]) -> Vec<u8> {
        Sha256::new()
            .chain_update(MOCK_PK_DOMAIN)
            .chain_update(seed)
            .finalize()
            .to_vec()
    }

    fn mask(pk: &[u8]) -> [u8; 32] {
        Sha256::new()
            .chain_update(MOCK_MASK_DOMAIN)
            .chain_update(pk)
            .finalize()
            .into()
    }

    fn tail(pk: &[u8], shared: &[u8], bits: usize) -> KeyRegister {
        let mut out = Vec::with_capacity(bits.div_ceil(8) + 32);
        let mut counter = 0u64;
        while out.len() * 8 < bits {
            let block = Sha256::new()
                .chain_update(MOCK_TAIL_DOMAIN)
                .chain_update(pk)
                .chain_update(shared)
                .chain_update(counter.to_be_bytes())
                .finalize();
            out.extend_from_slice(&block);
            counter += 1;
        }
        KeyRegister::from_bytes(&out, bits).expect("enough tail bytes")
    }
}

impl CryptoProvider for MockProvider {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn kem_keygen(&self, params: &KemParamSet, rng: &mut SimRng) -> Result<KemKeyPair, CryptoError> {
        if params.ciphertext_bits() < KEM_SHARED_KEY_BITS {
            return Err(CryptoError::UnsupportedParams(params.name().to_string()));
        }
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let pk = Self::public_from_seed(&seed);
        let mut sk = seed.to_vec();
        sk.extend_from_slice(&pk);
        Ok(KemKeyPair {
            public_key: KemPublicKey {
                params: params.clone(),
                bytes: pk,
            },
            secret_key: KemSecretKey {
                params: params.clone(),
                bytes: sk,
            },
        })
    }

    fn kem_encapsulate(&self, pk: &KemPublicKey, rng: &mut SimRng) -> Result<Encapsulated, CryptoError> {
        if pk.bytes.len() != 32 {
            return Err(CryptoError::MalformedPublicKey);
        }
        let shared = random_register(KEM_SHARED_KEY_BITS, rng);
        let mask = KeyRegister::from_byte_vec(Self::mask(&pk.bytes).to_vec());
        let head = shared.xor(&mask)?;
        let tail = Self::tail(
            &pk.bytes,
            shared.as_bytes(),
            pk.params.ciphertext_bits() - KEM_SHARED_KEY_BITS,
        );
        Ok(Encapsulated {
            ciphertext: head.concat(&tail),
            shared_key: shared,
        })
    }

    fn kem_decapsulate(&self, sk: &KemSecretKey, ciphertext: &KeyRegister) -> Result<KeyRegister, CryptoError> {
        check_ct_len(&sk.params, ciphertext)?;
        if sk.bytes.len() != 64 {
            return Err(CryptoError::MalformedSecretKey);
        }
        let (seed, pk) = sk.bytes.split_at(32);
        if Self::public_from_seed(seed) != pk {
            return Err(CryptoError::MalformedSecretKey);
        }
        let mask = KeyRegister::from_byte_vec(Self::mask(pk).to_vec());
        let shared = ciphertext.truncate(KEM_SHARED_KEY_BITS)?.xor(&mask)?;
        if self.check_tag {
            let bits = sk.params.ciphertext_bits();
            let expected = Self::tail(pk, shared.as_bytes(), bits - KEM_SHARED_KEY_BITS);
            if ciphertext.slice(KEM_SHARED_KEY_BITS, bits)? != expected {
                return Err(CryptoError::DecapsulationFailure);
            }
        }
        Ok(shared)
    }

    fn apply_keystream(&self, key: &[u8; 32], nonce: &Nonce, data: &mut [u8]) {
        for (counter, chunk) in data.chunks_mut(16).enumerate() {
            let block = Sha256::new()
                .chain_update(MOCK_STREAM_DOMAIN)
                .chain_update(key)
                .chain_update(nonce.0)
                .chain_update((counter as u64).to_be_bytes())
                .finalize();
            for (d, k) in chunk.iter_mut().zip(block.iter()) {
                *d ^= k;
            }
        }
    }

    fn cipher_spec(&self) -> CipherSpec {
        CipherSpec {
            key_bits: SYM_KEY_BITS,
            block_bits: CIPHER_BLOCK_BITS,
            mode: "MOCK-SHA256-CTR",
            nonce_bits: NONCE_BITS,
        }
    }
}

// ---------------------------------------------------------------------------
// Standard provider
// ---------------------------------------------------------------------------

/// ML-KEM-512/768/1024 with AES-256-CTR (128-bit big-endian counter block).
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardProvider;

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

fn mlkem_keygen<K: KemCore>(params: &KemParamSet, rng: &mut SimRng) -> KemKeyPair {
    let (dk, ek) = K::generate(rng);
    KemKeyPair {
        public_key: KemPublicKey {
            params: params.clone(),
            bytes: ek.as_bytes().to_vec(),
        },
        secret_key: KemSecretKey {
            params: params.clone(),
            bytes: dk.as_bytes().to_vec(),
        },
    }
}

fn mlkem_encapsulate<K: KemCore>(pk: &KemPublicKey, rng: &mut SimRng) -> Result<Encapsulated, CryptoError> {
    let encoded = ml_kem::Encoded::<K::EncapsulationKey>::try_from(pk.bytes.as_slice())
        .map_err(|_| CryptoError::MalformedPublicKey)?;
    let ek = K::EncapsulationKey::from_bytes(&encoded);
    let (ct, shared) = ek.encapsulate(rng).map_err(|_| CryptoError::MalformedPublicKey)?;
    Ok(Encapsulated {
        ciphertext: KeyRegister::from_byte_vec(ct.to_vec()),
        shared_key: KeyRegister::from_byte_vec(shared.to_vec()),
    })
}

fn mlkem_decapsulate<K: KemCore>(sk: &KemSecretKey, ciphertext: &KeyRegister) -> Result<KeyRegister, CryptoError> {
    let encoded = ml_kem::Encoded::<K::DecapsulationKey>::try_from(sk.bytes.as_slice())
        .map_err(|_| CryptoError::MalformedSecretKey)?;
    let dk = K::DecapsulationKey::from_bytes(&encoded);
    let ct = ml_kem::Ciphertext::<K>::try_from(ciphertext.as_bytes()).map_err(|_| CryptoError::LengthMismatch {
        expected: sk.params.ciphertext_bits(),
        actual: ciphertext.len(),
    })?;
    let shared = dk.decapsulate(&ct).map_err(|_| CryptoError::DecapsulationFailure)?;
    Ok(KeyRegister::from_byte_vec(shared.to_vec()))
}

#[derive(Clone, Copy)]
enum Level {
    L512,
    L768,
    L1024,
}

fn level(params: &KemParamSet) -> Result<Level, CryptoError> {
    match (params.name(), params.ciphertext_bits()) {
        ("KEM-512", 6144) => Ok(Level::L512),
        ("KEM-768", 8704) => Ok(Level::L768),
        ("KEM-1024", 12544) => Ok(Level::L1024),
        _ => Err(CryptoError::UnsupportedParams(params.name().to_string())),
    }
}

impl CryptoProvider for StandardProvider {
    fn name(&self) -> &'static str {
        "standard"
    }

    fn kem_keygen(&self, params: &KemParamSet, rng: &mut SimRng) -> Result<KemKeyPair, CryptoError> {
        Ok(match level(params)? {
            Level::L512 => mlkem_keygen::<MlKem512>(params, rng),
            Level::L768 => mlkem_keygen::<MlKem768>(params, rng),
            Level::L1024 => mlkem_keygen::<MlKem1024>(params, rng),
        })
    }

    fn kem_encapsulate(&self, pk: &KemPublicKey, rng: &mut SimRng) -> Result<Encapsulated, CryptoError> {
        match level(&pk.params)? {
            Level::L512 => mlkem_encapsulate::<MlKem512>(pk, rng),
            Level::L768 => mlkem_encapsulate::<MlKem768>(pk, rng),
            Level::L1024 => mlkem_encapsulate::<MlKem1024>(pk, rng),
        }
    }

    fn kem_decapsulate(&self, sk: &KemSecretKey, ciphertext: &KeyRegister) -> Result<KeyRegister, CryptoError> {
        check_ct_len(&sk.params, ciphertext)?;
        match level(&sk.params)? {
            Level::L512 => mlkem_decapsulate::<MlKem512>(sk, ciphertext),
            Level::L768 => mlkem_decapsulate::<MlKem768>(sk, ciphertext),
            Level::L1024 => mlkem_decapsulate::<MlKem1024>(sk, ciphertext),
        }
    }

    fn apply_keystream(&self, key: &[u8; 32], nonce: &Nonce, data: &mut [u8]) {
        let mut cipher = Aes256Ctr::new(key.into(), (&nonce.0).into());
        cipher.apply_keystream(data);
    }

    fn cipher_spec(&self) -> CipherSpec {
        CipherSpec {
            key_bits: SYM_KEY_BITS,
            block_bits: CIPHER_BLOCK_BITS,
            mode: "AES-256-CTR",
            nonce_bits: NONCE_BITS,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn providers() -> Vec<Box<dyn CryptoProvider>> {
        vec![Box::new(MockProvider::default()), Box::new(StandardProvider)]
    }

    #[test]
    fn builtin_geometry() {
        let bits: Vec<_> = KemParamSet::builtin().iter().map(|p| p.ciphertext_bits()).collect();
        assert_eq!(bits, [6144, 8704, 12544]);
        assert_eq!("kem-768".parse::<KemParamSet>().unwrap(), KemParamSet::kem768());
        assert!("KEM-2048".parse::<KemParamSet>().is_err());
        assert!(KemParamSet::custom("tiny", 128).is_err());
        assert!(KemParamSet::custom("KEM-512", 4096).is_err());
    }

    #[test]
    fn keygen_is_deterministic_under_seed() {
        for p in providers() {
            let a = p
                .kem_keygen(&KemParamSet::kem512(), &mut SimRng::seed_from_u64(5))
                .unwrap();
            let b = p
                .kem_keygen(&KemParamSet::kem512(), &mut SimRng::seed_from_u64(5))
                .unwrap();
            assert_eq!(a, b, "{}", p.name());
        }
    }

    #[test]
    fn kem_round_trip_and_ciphertext_lengths() {
        for p in providers() {
            let mut rng = SimRng::seed_from_u64(11);
            for params in KemParamSet::builtin() {
                let pair = p.kem_keygen(&params, &mut rng).unwrap();
                let enc = p.kem_encapsulate(&pair.public_key, &mut rng).unwrap();
                assert_eq!(enc.ciphertext.len(), params.ciphertext_bits());
                assert_eq!(enc.shared_key.len(), 256);
                let dec = p.kem_decapsulate(&pair.secret_key, &enc.ciphertext).unwrap();
                assert_eq!(dec, enc.shared_key, "{} {}", p.name(), params);
            }
        }
    }

    #[test]
    fn custom_params_mock_only() {
        let params = KemParamSet::custom("KEM-test", 4096).unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        let mock = MockProvider::default();
        let pair = mock.kem_keygen(&params, &mut rng).unwrap();
        let enc = mock.kem_encapsulate(&pair.public_key, &mut rng).unwrap();
        assert_eq!(enc.ciphertext.len(), 4096);
        assert_eq!(
            mock.kem_decapsulate(&pair.secret_key, &enc.ciphertext).unwrap(),
            enc.shared_key
        );
        assert!(matches!(
            StandardProvider.kem_keygen(&params, &mut rng),
            Err(CryptoError::UnsupportedParams(_))
        ));
    }

    #[test]
    fn decapsulate_wrong_length() {
        for p in providers() {
            let mut rng = SimRng::seed_from_u64(3);
            let pair = p.kem_keygen(&KemParamSet::kem512(), &mut rng).unwrap();
            let err = p
                .kem_decapsulate(&pair.secret_key, &KeyRegister::zeros(6000))
                .unwrap_err();
            assert_eq!(
                err,
                CryptoError::LengthMismatch {
                    expected: 6144,
                    actual: 6000
                }
            );
        }
    }

    #[test]
    fn mismatched_pair_gives_other_key() {
        for p in providers() {
            let mut rng = SimRng::seed_from_u64(4);
            let pair = p.kem_keygen(&KemParamSet::kem768(), &mut rng).unwrap();
            let other = p.kem_keygen(&KemParamSet::kem768(), &mut rng).unwrap();
            let enc = p.kem_encapsulate(&pair.public_key, &mut rng).unwrap();
            let wrong = p.kem_decapsulate(&other.secret_key, &enc.ciphertext).unwrap();
            assert_ne!(wrong, enc.shared_key);
        }
    }

    #[test]
    fn mock_tag_flags_tampering() {
        let p = MockProvider::with_tag_check();
        let mut rng = SimRng::seed_from_u64(8);
        let pair = p.kem_keygen(&KemParamSet::kem512(), &mut rng).unwrap();
        let enc = p.kem_encapsulate(&pair.public_key, &mut rng).unwrap();
        let mut bytes = vec![0u8; 6144 / 8];
        bytes[500] = 0x01;
        let tampered = enc.ciphertext.xor(&KeyRegister::from_byte_vec(bytes)).unwrap();
        assert_eq!(
            p.kem_decapsulate(&pair.secret_key, &tampered),
            Err(CryptoError::DecapsulationFailure)
        );
        let other = p.kem_keygen(&KemParamSet::kem512(), &mut rng).unwrap();
        assert_eq!(
            p.kem_decapsulate(&other.secret_key, &enc.ciphertext),
            Err(CryptoError::DecapsulationFailure)
        );
    }

    #[test]
    fn malformed_public_key() {
        for p in providers() {
            let pk = KemPublicKey {
                params: KemParamSet::kem512(),
                bytes: vec![1, 2, 3],
            };
            assert_eq!(
                p.kem_encapsulate(&pk, &mut SimRng::seed_from_u64(0)),
                Err(CryptoError::MalformedPublicKey)
            );
        }
    }

    #[test]
    fn sym_round_trip_length_and_tamper() {
        for p in providers() {
            let mut rng = SimRng::seed_from_u64(21);
            let key = random_register(256, &mut rng);
            let nonce = Nonce::random(&mut rng);
            for len in [256usize, 512, 2560] {
                let m = random_register(len, &mut rng);
                let c = p.sym_encrypt(&key, &nonce, &m).unwrap();
                assert_eq!(c.len(), len);
                assert_eq!(p.sym_decrypt(&key, &nonce, &c).unwrap(), m);
                let mut flip = vec![0u8; len / 8];
                flip[3] = 0x10;
                let flip = KeyRegister::from_byte_vec(flip);
                let tampered = c.xor(&flip).unwrap();
                let out = p.sym_decrypt(&key, &nonce, &tampered).unwrap();
                assert_eq!(out.xor(&m).unwrap(), flip);
            }
            let m = random_register(300, &mut rng);
            let c = p.sym_encrypt(&key, &nonce, &m).unwrap();
            assert_eq!(c.len(), 384);
            let back = p.sym_decrypt(&key, &nonce, &c).unwrap();
            assert_eq!(back.unpad(300, 128).unwrap(), m);
        }
    }

    #[test]
    fn sym_ciphertext_differs_from_plaintext() {
        for p in providers() {
            for seed in 0..100 {
                let mut rng = SimRng::seed_from_u64(seed);
                let key = random_register(256, &mut rng);
                let nonce = Nonce::random(&mut rng);
                let m = random_register(256, &mut rng);
                assert_ne!(p.sym_encrypt(&key, &nonce, &m).unwrap(), m);
            }
        }
    }

    #[test]
    fn nonce_discipline() {
        for p in providers() {
            let mut rng = SimRng::seed_from_u64(31);
            let key = random_register(256, &mut rng);
            let m = random_register(512, &mut rng);
            let n1 = Nonce::random(&mut rng);
            let n2 = Nonce::random(&mut rng);
            assert_eq!(
                p.sym_encrypt(&key, &n1, &m).unwrap(),
                p.sym_encrypt(&key, &n1, &m).unwrap()
            );
            assert_ne!(
                p.sym_encrypt(&key, &n1, &m).unwrap(),
                p.sym_encrypt(&key, &n2, &m).unwrap()
            );
        }
    }

    #[test]
    fn sym_rejects_bad_key() {
        let p = MockProvider::default();
        let err = p
            .sym_encrypt(&KeyRegister::zeros(128), &Nonce::default(), &KeyRegister::zeros(128))
            .unwrap_err();
        assert_eq!(err, CryptoError::BadKeyLength(128));
        let err = p
            .sym_decrypt(&KeyRegister::zeros(256), &Nonce::default(), &KeyRegister::zeros(100))
            .unwrap_err();
        assert_eq!(err, CryptoError::Unaligned(100));
    }

    #[test]
    fn aes_ctr_known_answer() {
        // NIST SP 800-38A F.5.5 CTR-AES256.Encrypt, first block
        let key: [u8; 32] = hex32("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4");
        let iv: [u8; 16] = hex32("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff00000000000000000000000000000000")[..16]
            .try_into()
            .unwrap();
        let mut block: [u8; 16] = hex32("6bc1bee22e409f96e93d7e117393172a00000000000000000000000000000000")[..16]
            .try_into()
            .unwrap();
        StandardProvider.apply_keystream(&key, &Nonce(iv), &mut block);
        let expected: [u8; 16] = hex32("601ec313775789a5b7a7f504bbf3d22800000000000000000000000000000000")[..16]
            .try_into()
            .unwrap();
        assert_eq!(block, expected);
    }

    fn hex32(s: &str) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).unwrap();
        }
        out
    }
}
