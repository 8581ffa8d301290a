//! Binary corpus files.
//!
//! Layout (little-endian): magic `CVLB1`, `u32` metadata length, JSON
//! metadata, then one record per utterance: `u16` language, `u32` frame
//! count, `u16` mel bins, `channels × frames × bins` `f32` features and
//! `frames` `u32` targets.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Corpus, LanguageInfo, Utterance};

pub const CORPUS_MAGIC: &[u8; 5] = b"CVLB1";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Metadata {
    languages: Vec<LanguageInfo>,
    mel_bins: usize,
    channels: usize,
    seed: Option<u64>,
    utterances: usize,
}

pub fn to_bytes(corpus: &Corpus) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&Metadata {
        languages: corpus.languages.clone(),
        mel_bins: corpus.mel_bins,
        channels: corpus.channels,
        seed: corpus.seed,
        utterances: corpus.utterances.len(),
    })?;
    let bins = u16::try_from(corpus.mel_bins).map_err(|_| Error::contract("mel bins exceed u16"))?;
    let mut out = Vec::with_capacity(16 + meta.len() + corpus.total_frames() * (corpus.mel_bins * corpus.channels + 1) * 4);
    out.extend_from_slice(CORPUS_MAGIC);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for u in &corpus.utterances {
        let frames = u32::try_from(u.num_frames()).map_err(|_| Error::contract("utterance exceeds u32 frames"))?;
        out.extend_from_slice(&u.language.to_le_bytes());
        out.extend_from_slice(&frames.to_le_bytes());
        out.extend_from_slice(&bins.to_le_bytes());
        for v in u.features() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in u.targets() {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Corpus> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(CORPUS_MAGIC.len(), "magic")?;
    if magic != CORPUS_MAGIC {
        return Err(Error::format(0, "bad magic: expected \"CVLB1\""));
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_at = r.pos as u64;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| Error::format(meta_at, format!("metadata: {e}")))?;
    if meta.mel_bins == 0 || meta.channels == 0 {
        return Err(Error::format(meta_at, "metadata declares zero mel bins or channels"));
    }

    let mut corpus = Corpus::new(meta.languages, meta.mel_bins, meta.channels);
    corpus.seed = meta.seed;
    for _ in 0..meta.utterances {
        let at = r.pos as u64;
        let language = r.u16("record language")?;
        let frames = r.u32("record frame count")? as usize;
        let bins = r.u16("record mel bins")? as usize;
        if bins != meta.mel_bins {
            return Err(Error::format(at, format!("record has {bins} mel bins, metadata says {}", meta.mel_bins)));
        }
        let n = frames
            .checked_mul(bins * meta.channels)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(at, "record size overflows"))?;
        let features = r
            .take(n, "features")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let targets = r
            .take(frames * 4, "targets")?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let utt = Utterance::new(language, meta.channels, bins, features, targets)?;
        corpus.push(utt).map_err(|e| Error::format(at, e))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last record"));
    }
    Ok(corpus)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_bytes(corpus)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_synthetic_corpus;

    #[test]
    fn round_trip() {
        let c = gen_synthetic_corpus(2, 3, 300, 5, 3).unwrap();
        assert_eq!(from_bytes(&to_bytes(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = to_bytes(&gen_synthetic_corpus(1, 3, 50, 4, 3).unwrap()).unwrap();
        for cut in [3, 7, bytes.len() - 1] {
            match from_bytes(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("expected format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = to_bytes(&gen_synthetic_corpus(1, 2, 10, 4, 3).unwrap()).unwrap();
        bytes[0] = b'X';
        let err = from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("CVLB1"), "{err}");
    }
}
