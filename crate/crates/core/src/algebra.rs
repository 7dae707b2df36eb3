//! Symbolic message terms, the hash primitive, and the sealed-box model of
//! encryption.
//!
//! Every encryption in the protocol is a [`Term::Sealed`] box tagged with
//! `SHA-256(key bytes)`. Boxes are deterministic: sealing the same payload
//! under the same key twice yields equal terms. Public-key pairs are two
//! related keys whose tags are linked in a [`KeyRegistry`].
//!
//! # Wire encoding
//!
//! [`Term::encode`] is a tag-prefixed, length-prefixed encoding. All lengths
//! and numbers are big-endian.
//!
//! | tag    | variant  | body                                        |
//! |--------|----------|---------------------------------------------|
//! | `0x01` | `Atom`   | `u32` length, UTF-8 label                   |
//! | `0x02` | `Id`     | `u32` length, UTF-8 party name              |
//! | `0x03` | `Nonce`  | `u32` length, UTF-8 tag, 16 value bytes     |
//! | `0x04` | `Num`    | `u64`                                       |
//! | `0x05` | `Bytes`  | `u32` length, raw bytes                     |
//! | `0x06` | `Cat`    | `u32` part count, encoded parts             |
//! | `0x07` | `Sealed` | 32-byte key tag, encoded payload            |

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Sub};

use rand_core::RngCore;
use sha2::{Digest as _, Sha256};

/// Length in bytes of a [`Digest`] and of every key.
pub const DIGEST_LEN: usize = 32;
/// Length in bytes of a nonce value.
pub const NONCE_LEN: usize = 16;

const MAX_DECODE_DEPTH: usize = 64;

/// Output of [`hash`]: a 32-byte SHA-256 value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// SHA-256. This is the only hash function used anywhere in the crate.
pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of the concatenation of `parts`.
pub fn hash_concat(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Bytewise XOR; the shorter operand is right-padded with zero bytes.
pub fn xor_combine(a: &[u8], b: &[u8]) -> Vec<u8> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| a.get(i).copied().unwrap_or(0) ^ b.get(i).copied().unwrap_or(0))
        .collect()
}

/// Numbers enter XOR combinations as 8-byte big-endian values.
pub fn encode_num(n: u64) -> [u8; 8] {
    n.to_be_bytes()
}

/// [`xor_combine`] of two 32-byte-or-shorter values, truncated/padded to 32 bytes.
pub fn xor32(a: &[u8], b: &[u8]) -> [u8; DIGEST_LEN] {
    let v = xor_combine(a, b);
    let mut out = [0u8; DIGEST_LEN];
    let n = v.len().min(DIGEST_LEN);
    out[..n].copy_from_slice(&v[..n]);
    out
}

/// Role of a key. Metadata only: sealing and equality look at bytes alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KeyKind {
    TimeBased,
    Group,
    Session,
    PublicPair,
    Partial,
}

#[derive(Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Key {
    pub bytes: [u8; DIGEST_LEN],
    pub kind: KeyKind,
}

impl Key {
    pub fn new(bytes: [u8; DIGEST_LEN], kind: KeyKind) -> Self {
        Key { bytes, kind }
    }

    pub fn random<R: RngCore>(rng: &mut R, kind: KeyKind) -> Self {
        let mut bytes = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut bytes);
        Key { bytes, kind }
    }

    /// `hash(bytes)`, the tag carried by boxes sealed under this key.
    pub fn tag(&self) -> Digest {
        hash(&self.bytes)
    }

    /// The key as a message term, for placing on the wire or in intruder knowledge.
    pub fn to_term(&self) -> Term {
        Term::Bytes(self.bytes.to_vec())
    }
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl Eq for Key {}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({:?}, {})", self.kind, &hex::encode(self.bytes)[..12])
    }
}

/// A public-key pair: boxes sealed with `public` open only with `private`
/// once the pair is registered in a [`KeyRegistry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KeyPair {
    pub public: Key,
    pub private: Key,
}

impl KeyPair {
    /// Derives the public half as `hash(0x50 || private)`.
    pub fn from_private(private: [u8; DIGEST_LEN]) -> Self {
        let public = hash_concat(&[&[0x50], &private]);
        KeyPair {
            public: Key::new(public.0, KeyKind::PublicPair),
            private: Key::new(private, KeyKind::PublicPair),
        }
    }

    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut sk = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut sk);
        Self::from_private(sk)
    }
}

/// Symbolic message value.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Term {
    Atom(String),
    Id(String),
    Nonce { tag: String, value: [u8; NONCE_LEN] },
    Num(u64),
    Bytes(Vec<u8>),
    Cat(Vec<Term>),
    Sealed { key_tag: Digest, payload: Box<Term> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OpenError {
    #[error("term is not a sealed box")]
    NotSealed,
    #[error("key does not match the box tag")]
    WrongKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("unknown tag byte {0:#04x}")]
    UnknownTag(u8),
    #[error("label is not valid UTF-8")]
    BadUtf8,
    #[error("nesting deeper than {MAX_DECODE_DEPTH}")]
    TooDeep,
    #[error("{0} trailing bytes after term")]
    Trailing(usize),
}

impl Term {
    pub fn atom(s: &str) -> Term {
        Term::Atom(s.into())
    }

    pub fn id(s: &str) -> Term {
        Term::Id(s.into())
    }

    pub fn nonce(tag: &str, value: [u8; NONCE_LEN]) -> Term {
        Term::Nonce { tag: tag.into(), value }
    }

    pub fn random_nonce<R: RngCore>(tag: &str, rng: &mut R) -> Term {
        let mut value = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut value);
        Term::nonce(tag, value)
    }

    pub fn bytes(b: &[u8]) -> Term {
        Term::Bytes(b.to_vec())
    }

    pub fn digest(d: &Digest) -> Term {
        Term::Bytes(d.0.to_vec())
    }

    pub fn cat(parts: impl IntoIterator<Item = Term>) -> Term {
        Term::Cat(parts.into_iter().collect())
    }

    /// `x + 1` for numeric-like terms: nonces and byte strings increment as
    /// big-endian integers (wrapping), numbers as `u64`.
    pub fn succ(&self) -> Option<Term> {
        match self {
            Term::Nonce { tag, value } => {
                let v = u128::from_be_bytes(*value).wrapping_add(1);
                Some(Term::Nonce { tag: tag.clone(), value: v.to_be_bytes() })
            }
            Term::Bytes(b) => {
                let mut out = b.clone();
                for byte in out.iter_mut().rev() {
                    let (v, carry) = byte.overflowing_add(1);
                    *byte = v;
                    if !carry {
                        break;
                    }
                }
                Some(Term::Bytes(out))
            }
            Term::Num(n) => Some(Term::Num(n.wrapping_add(1))),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<&[Term]> {
        match self {
            Term::Cat(parts) => Some(parts),
            _ => None,
        }
    }

    pub fn as_id(&self) -> Option<&str> {
        match self {
            Term::Id(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Term::Atom(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<u64> {
        match self {
            Term::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Term::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_bytes32(&self) -> Option<[u8; DIGEST_LEN]> {
        self.as_bytes().and_then(|b| b.try_into().ok())
    }

    /// Nesting depth; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Term::Cat(parts) => 1 + parts.iter().map(Term::depth).max().unwrap_or(0),
            Term::Sealed { payload, .. } => 1 + payload.depth(),
            _ => 1,
        }
    }

    /// Deterministic, injective binary encoding (see module docs).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        fn put_str(out: &mut Vec<u8>, s: &[u8]) {
            out.extend_from_slice(&(s.len() as u32).to_be_bytes());
            out.extend_from_slice(s);
        }
        match self {
            Term::Atom(s) => {
                out.push(0x01);
                put_str(out, s.as_bytes());
            }
            Term::Id(s) => {
                out.push(0x02);
                put_str(out, s.as_bytes());
            }
            Term::Nonce { tag, value } => {
                out.push(0x03);
                put_str(out, tag.as_bytes());
                out.extend_from_slice(value);
            }
            Term::Num(n) => {
                out.push(0x04);
                out.extend_from_slice(&n.to_be_bytes());
            }
            Term::Bytes(b) => {
                out.push(0x05);
                put_str(out, b);
            }
            Term::Cat(parts) => {
                out.push(0x06);
                out.extend_from_slice(&(parts.len() as u32).to_be_bytes());
                for p in parts {
                    p.encode_into(out);
                }
            }
            Term::Sealed { key_tag, payload } => {
                out.push(0x07);
                out.extend_from_slice(&key_tag.0);
                payload.encode_into(out);
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Term, DecodeError> {
        let mut reader = Reader { buf: bytes, pos: 0 };
        let term = reader.term(0)?;
        match bytes.len() - reader.pos {
            0 => Ok(term),
            n => Err(DecodeError::Trailing(n)),
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    /// Digest of the encoding; used to name terms in registries and bindings.
    pub fn fingerprint(&self) -> Digest {
        hash(&self.encode())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self) -> Result<String, DecodeError> {
        let n = self.u32()?;
        let b = self.take(n)?;
        core::str::from_utf8(b).map(String::from).map_err(|_| DecodeError::BadUtf8)
    }

    fn term(&mut self, depth: usize) -> Result<Term, DecodeError> {
        if depth > MAX_DECODE_DEPTH {
            return Err(DecodeError::TooDeep);
        }
        let tag = self.take(1)?[0];
        Ok(match tag {
            0x01 => Term::Atom(self.string()?),
            0x02 => Term::Id(self.string()?),
            0x03 => {
                let tag = self.string()?;
                let mut value = [0u8; NONCE_LEN];
                value.copy_from_slice(self.take(NONCE_LEN)?);
                Term::Nonce { tag, value }
            }
            0x04 => {
                let mut n = [0u8; 8];
                n.copy_from_slice(self.take(8)?);
                Term::Num(u64::from_be_bytes(n))
            }
            0x05 => {
                let n = self.u32()?;
                Term::Bytes(self.take(n)?.to_vec())
            }
            0x06 => {
                let count = self.u32()?;
                // Each part takes at least one byte; reject absurd counts early.
                if count > self.buf.len() - self.pos {
                    return Err(DecodeError::Truncated);
                }
                let mut parts = Vec::with_capacity(count);
                for _ in 0..count {
                    parts.push(self.term(depth + 1)?);
                }
                Term::Cat(parts)
            }
            0x07 => {
                let mut key_tag = [0u8; DIGEST_LEN];
                key_tag.copy_from_slice(self.take(DIGEST_LEN)?);
                let payload = self.term(depth + 1)?;
                Term::Sealed { key_tag: Digest(key_tag), payload: Box::new(payload) }
            }
            other => return Err(DecodeError::UnknownTag(other)),
        })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Atom(s) => write!(f, "{s}"),
            Term::Id(s) => write!(f, "@{s}"),
            Term::Nonce { tag, value } => write!(f, "{tag}#{}", &hex::encode(value)[..8]),
            Term::Num(n) => write!(f, "{n}"),
            Term::Bytes(b) => write!(f, "0x{}", &hex::encode(b)[..b.len().min(6) * 2]),
            Term::Cat(parts) => {
                f.write_str("(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" || ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
            Term::Sealed { key_tag, payload } => {
                write!(f, "E[{}]{payload}", &key_tag.to_hex()[..6])
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `Sealed(hash(key.bytes), payload)`.
pub fn seal(key: &Key, payload: Term) -> Term {
    Term::Sealed { key_tag: key.tag(), payload: Box::new(payload) }
}

/// Returns the payload iff `hash(key.bytes)` equals the box tag.
pub fn open(key: &Key, sealed: &Term) -> Result<Term, OpenError> {
    match sealed {
        Term::Sealed { key_tag, payload } => {
            if key.tag() == *key_tag {
                Ok((**payload).clone())
            } else {
                Err(OpenError::WrongKey)
            }
        }
        _ => Err(OpenError::NotSealed),
    }
}

/// Links the tag of each public key to the tag of its private partner.
///
/// A box sealed under a registered public key opens only with the private
/// key; every other box opens only with the key that sealed it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyRegistry {
    pairs: BTreeMap<Digest, Digest>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, pair: &KeyPair) {
        self.pairs.insert(pair.public.tag(), pair.private.tag());
    }

    /// Tag of the key able to open a box carrying `box_tag`.
    pub fn opener_tag(&self, box_tag: &Digest) -> Digest {
        self.pairs.get(box_tag).copied().unwrap_or(*box_tag)
    }

    pub fn is_public(&self, tag: &Digest) -> bool {
        self.pairs.contains_key(tag)
    }

    pub fn open(&self, key: &Key, sealed: &Term) -> Result<Term, OpenError> {
        match sealed {
            Term::Sealed { key_tag, payload } => {
                if self.opener_tag(key_tag) == key.tag() {
                    Ok((**payload).clone())
                } else {
                    Err(OpenError::WrongKey)
                }
            }
            _ => Err(OpenError::NotSealed),
        }
    }
}

/// Operation counters. Counted variants of the primitives live here so that
/// every online hash, XOR and seal/open a party performs is tallied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OpCounts {
    pub hash: u64,
    pub xor: u64,
    pub seal: u64,
    pub open: u64,
    pub modexp: u64,
}

impl OpCounts {
    pub fn hash(&mut self, data: &[u8]) -> Digest {
        self.hash += 1;
        hash(data)
    }

    pub fn hash_concat(&mut self, parts: &[&[u8]]) -> Digest {
        self.hash += 1;
        hash_concat(parts)
    }

    pub fn xor32(&mut self, a: &[u8], b: &[u8]) -> [u8; DIGEST_LEN] {
        self.xor += 1;
        xor32(a, b)
    }

    pub fn seal(&mut self, key: &Key, payload: Term) -> Term {
        self.seal += 1;
        seal(key, payload)
    }

    pub fn open(&mut self, key: &Key, sealed: &Term) -> Result<Term, OpenError> {
        self.open += 1;
        open(key, sealed)
    }

    pub fn open_with(
        &mut self,
        registry: &KeyRegistry,
        key: &Key,
        sealed: &Term,
    ) -> Result<Term, OpenError> {
        self.open += 1;
        registry.open(key, sealed)
    }
}

impl Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            hash: self.hash + o.hash,
            xor: self.xor + o.xor,
            seal: self.seal + o.seal,
            open: self.open + o.open,
            modexp: self.modexp + o.modexp,
        }
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: OpCounts) {
        *self = *self + o;
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, o: OpCounts) -> OpCounts {
        OpCounts {
            hash: self.hash - o.hash,
            xor: self.xor - o.xor,
            seal: self.seal - o.seal,
            open: self.open - o.open,
            modexp: self.modexp - o.modexp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sha256_empty_vector() {
        // FIPS 180-2 reference digest of the empty message.
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_deterministic_and_sensitive_to_trailing_zero() {
        let x = b"some fixed input 4821";
        assert_eq!(hash(x), hash(x));
        let mut y = x.to_vec();
        y.push(0);
        assert_ne!(hash(x), hash(&y));
    }

    #[test]
    fn xor_padding_rule() {
        assert_eq!(xor_combine(&[0x01], &[0x01, 0x02]), vec![0x00, 0x02]);
        let x = [7u8, 9, 200];
        assert_eq!(xor_combine(&x, &[0, 0, 0]), x.to_vec());
        assert_eq!(xor_combine(&x, &x), vec![0, 0, 0]);
        assert_eq!(xor_combine(&[], &[]), Vec::<u8>::new());
    }

    #[test]
    fn seal_open_basics() {
        let k1 = Key::new([1; 32], KeyKind::Session);
        let k2 = Key::new([2; 32], KeyKind::Session);
        let t = Term::atom("x");
        let b = seal(&k1, t.clone());
        assert_eq!(open(&k1, &b), Ok(t.clone()));
        assert_eq!(open(&k2, &b), Err(OpenError::WrongKey));
        assert_eq!(open(&k1, &t), Err(OpenError::NotSealed));
        assert_eq!(seal(&k1, t.clone()), b);
        // kind never matters
        let k1g = Key::new([1; 32], KeyKind::Group);
        assert_eq!(k1, k1g);
        assert_eq!(seal(&k1g, t), b);
    }

    #[test]
    fn registry_pairs_are_one_way() {
        let pair = KeyPair::from_private([9; 32]);
        let mut reg = KeyRegistry::new();
        reg.register(&pair);
        let b = seal(&pair.public, Term::atom("secret"));
        assert_eq!(reg.open(&pair.private, &b), Ok(Term::atom("secret")));
        assert_eq!(reg.open(&pair.public, &b), Err(OpenError::WrongKey));
        // unregistered symmetric boxes still open with their own key
        let k = Key::new([3; 32], KeyKind::Group);
        assert!(reg.open(&k, &seal(&k, Term::Num(1))).is_ok());
    }

    #[test]
    fn encoding_by_hand() {
        // Cat[Atom("a"), Num(258)]
        let t = Term::cat([Term::atom("a"), Term::Num(258)]);
        let expected = [
            0x06, 0, 0, 0, 2, // cat, 2 parts
            0x01, 0, 0, 0, 1, b'a', // atom "a"
            0x04, 0, 0, 0, 0, 0, 0, 1, 2, // num 258
        ];
        assert_eq!(t.encode(), expected);
        assert_eq!(Term::decode(&expected), Ok(t));
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(Term::decode(&[]), Err(DecodeError::Truncated));
        assert_eq!(Term::decode(&[0x09]), Err(DecodeError::UnknownTag(0x09)));
        assert_eq!(Term::decode(&[0x04, 0, 0]), Err(DecodeError::Truncated));
        let mut ok = Term::Num(1).encode();
        ok.push(0);
        assert_eq!(Term::decode(&ok), Err(DecodeError::Trailing(1)));
        assert_eq!(Term::decode(&[0x06, 0xff, 0xff, 0xff, 0xff]), Err(DecodeError::Truncated));
    }

    #[test]
    fn succ_carries() {
        let mut v = [0u8; 16];
        v[15] = 0xff;
        let n = Term::nonce("N0", v);
        let mut w = [0u8; 16];
        w[14] = 1;
        assert_eq!(n.succ(), Some(Term::nonce("N0", w)));
        assert_eq!(Term::bytes(&[0x00, 0xff]).succ(), Some(Term::bytes(&[0x01, 0x00])));
        assert_eq!(Term::atom("x").succ(), None);
    }

    #[test]
    fn counted_ops_tally() {
        let mut ops = OpCounts::default();
        let k = Key::new([5; 32], KeyKind::Session);
        ops.hash(b"a");
        ops.xor32(&[1], &[2]);
        let b = ops.seal(&k, Term::Num(3));
        ops.open(&k, &b).unwrap();
        assert_eq!(ops, OpCounts { hash: 1, xor: 1, seal: 1, open: 1, modexp: 0 });
        assert_eq!(ops - ops, OpCounts::default());
    }
}
