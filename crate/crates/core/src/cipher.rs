//! Keystream generation for the encryptable sign slots.
//!
//! Every keystream is a pure function of (key, nonce, frame index, slot
//! position): re-encoding the same video twice yields identical ciphertext,
//! and a keyless transrater that drops or keeps coefficients never disturbs
//! the bit a surviving sign decrypts with. The AES variant chains 128-bit
//! blocks through the block cipher from a per-frame IV; the XOR variants
//! run a per-frame SplitMix64 stream or a fixed repeating key.

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;

use crate::error::{Error, Result};
use crate::rng::splitmix64_next;

pub const KEY_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CipherKind {
    Null,
    Aes128Cfb,
    XorFixed,
    XorPrng,
}

impl CipherKind {
    pub fn to_u8(self) -> u8 {
        match self {
            CipherKind::Null => 0,
            CipherKind::Aes128Cfb => 1,
            CipherKind::XorFixed => 2,
            CipherKind::XorPrng => 3,
        }
    }

    pub fn from_u8(v: u8) -> Result<CipherKind> {
        match v {
            0 => Ok(CipherKind::Null),
            1 => Ok(CipherKind::Aes128Cfb),
            2 => Ok(CipherKind::XorFixed),
            3 => Ok(CipherKind::XorPrng),
            _ => Err(Error::format(format!("unknown cipher id {v}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CipherKind::Null => "null",
            CipherKind::Aes128Cfb => "aes-cfb",
            CipherKind::XorFixed => "xor-fixed",
            CipherKind::XorPrng => "xor-prng",
        }
    }
}

/// Cipher selection plus key material. The kind and nonce are recorded in
/// the bitstream header; the key never leaves this struct.
#[derive(Clone)]
pub struct CipherSpec {
    pub kind: CipherKind,
    pub key: [u8; KEY_LEN],
    pub nonce: [u8; NONCE_LEN],
}

impl CipherSpec {
    pub fn null() -> CipherSpec {
        CipherSpec { kind: CipherKind::Null, key: [0; KEY_LEN], nonce: [0; NONCE_LEN] }
    }

    pub fn new(kind: CipherKind, key: [u8; KEY_LEN], nonce: [u8; NONCE_LEN]) -> CipherSpec {
        CipherSpec { kind, key, nonce }
    }

    /// True for the degenerate all-zero XOR-fixed key, under which
    /// encryption is the identity. Permitted, but callers should warn.
    pub fn is_identity_keystream(&self) -> bool {
        self.kind == CipherKind::XorFixed && self.key.iter().all(|&b| b == 0)
    }
}

/// FIPS-197 AES-128 forward cipher on one block.
pub fn aes_block(key: &[u8; 16], block: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(key.into());
    let mut out = (*block).into();
    cipher.encrypt_block(&mut out);
    out.into()
}

/// Parses a key file: 56 hex characters = 16-byte key followed by a
/// 12-byte nonce. Surrounding whitespace is tolerated.
pub fn parse_key_text(text: &str) -> Result<([u8; KEY_LEN], [u8; NONCE_LEN])> {
    let hex: String = text.split_whitespace().collect();
    if hex.len() != 2 * (KEY_LEN + NONCE_LEN) {
        return Err(Error::crypto(format!(
            "key file must hold {} hex characters, found {}",
            2 * (KEY_LEN + NONCE_LEN),
            hex.len()
        )));
    }
    let mut bytes = [0u8; KEY_LEN + NONCE_LEN];
    for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
        let s = std::str::from_utf8(chunk).map_err(|_| Error::crypto("key file is not hex"))?;
        bytes[i] = u8::from_str_radix(s, 16).map_err(|_| Error::crypto("key file is not hex"))?;
    }
    let mut key = [0u8; KEY_LEN];
    let mut nonce = [0u8; NONCE_LEN];
    key.copy_from_slice(&bytes[..KEY_LEN]);
    nonce.copy_from_slice(&bytes[KEY_LEN..]);
    Ok((key, nonce))
}

pub fn format_key_text(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_LEN]) -> String {
    let mut s = String::with_capacity(2 * (KEY_LEN + NONCE_LEN));
    for b in key.iter().chain(nonce.iter()) {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

enum KeystreamImpl {
    Null,
    Aes { key: [u8; 16], block: [u8; 16], bit: usize, evals: u64 },
    XorPrng { state: u64, word: u64, bit: usize },
    XorFixed { key: [u8; 16], bit: usize },
}

/// Per-frame keystream over the encryptable sign slots. Each slot consumes
/// exactly one bit, taken MSB-first from the current block.
pub struct Keystream {
    inner: KeystreamImpl,
}

impl Keystream {
    /// Derives the per-frame state: the AES IV is `nonce || frame_index`
    /// (big-endian), the PRNG seed mixes the key, nonce and frame index.
    pub fn new(spec: &CipherSpec, frame_index: u32) -> Keystream {
        let inner = match spec.kind {
            CipherKind::Null => KeystreamImpl::Null,
            CipherKind::Aes128Cfb => {
                let mut iv = [0u8; 16];
                iv[..NONCE_LEN].copy_from_slice(&spec.nonce);
                iv[NONCE_LEN..].copy_from_slice(&frame_index.to_be_bytes());
                KeystreamImpl::Aes {
                    key: spec.key,
                    block: aes_block(&spec.key, &iv),
                    bit: 0,
                    evals: 1,
                }
            }
            CipherKind::XorPrng => {
                let k = u64::from_le_bytes(spec.key[..8].try_into().unwrap());
                let n = u64::from_le_bytes(spec.nonce[..8].try_into().unwrap());
                let mut state = k ^ n ^ frame_index as u64;
                let word = splitmix64_next(&mut state);
                KeystreamImpl::XorPrng { state, word, bit: 0 }
            }
            CipherKind::XorFixed => KeystreamImpl::XorFixed { key: spec.key, bit: 0 },
        };
        Keystream { inner }
    }

    /// The keystream bit for the next slot.
    pub fn next_bit(&mut self) -> bool {
        match &mut self.inner {
            KeystreamImpl::Null => false,
            KeystreamImpl::Aes { key, block, bit, evals } => {
                if *bit == 128 {
                    *block = aes_block(key, block);
                    *evals += 1;
                    *bit = 0;
                }
                let b = block[*bit / 8] >> (7 - *bit % 8) & 1 == 1;
                *bit += 1;
                b
            }
            KeystreamImpl::XorPrng { state, word, bit } => {
                if *bit == 64 {
                    *word = splitmix64_next(state);
                    *bit = 0;
                }
                let b = *word >> (63 - *bit) & 1 == 1;
                *bit += 1;
                b
            }
            KeystreamImpl::XorFixed { key, bit } => {
                let i = *bit % 128;
                *bit += 1;
                key[i / 8] >> (7 - i % 8) & 1 == 1
            }
        }
    }

    /// Number of AES block evaluations so far (zero for non-AES kinds).
    pub fn aes_evals(&self) -> u64 {
        match &self.inner {
            KeystreamImpl::Aes { evals, .. } => *evals,
            _ => 0,
        }
    }
}

/// XORs a frame's worth of sign bins with the keystream; its own inverse.
pub fn encrypt_bins(bins: &[bool], spec: &CipherSpec, frame_index: u32) -> Vec<bool> {
    let mut ks = Keystream::new(spec, frame_index);
    bins.iter().map(|&b| b ^ ks.next_bit()).collect()
}
