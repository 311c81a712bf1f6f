use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

/// Decoded audio: first channel only, scaled to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub samples: Vec<f64>,
    pub rate: u32,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a PCM WAV file (8/16/24/32-bit integer or 32-bit float).
///
/// Integer samples are divided by 2^(bits-1); no gain normalization is applied.
/// Multi-channel files return channel 0.
pub fn load_wav(path: impl AsRef<Path>) -> Result<WavAudio> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    if reader.len() == 0 {
        return Err(Error::Format(format!("{}: zero-length audio", path.display())));
    }

    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .step_by(channels)
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported encoding {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    if samples.is_empty() {
        return Err(Error::Format(format!("{}: zero-length audio", path.display())));
    }
    Ok(WavAudio {
        samples,
        rate: spec.sample_rate,
    })
}

/// Writes mono 32-bit float PCM. Used for synthetic corpora, where the float
/// encoding keeps the generated waveform exact up to f32 rounding.
pub fn write_wav_f32(path: impl AsRef<Path>, samples: &[f64], rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in samples {
        w.write_sample(s as f32).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_int(path: &Path, channels: u16, bits: u16, rate: u32, frames: &[Vec<i32>]) {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for frame in frames {
            for &s in frame {
                match bits {
                    8 => w.write_sample(s as i8).unwrap(),
                    16 => w.write_sample(s as i16).unwrap(),
                    _ => w.write_sample(s).unwrap(),
                }
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn sixteen_bit_half_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.wav");
        write_int(&p, 1, 16, 4000, &[vec![16384]]);
        let a = load_wav(&p).unwrap();
        assert_eq!(a.samples, vec![0.5]);
        assert_eq!(a.rate, 4000);
    }

    #[test]
    fn zero_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("zeros.wav");
        write_int(&p, 1, 16, 2000, &vec![vec![0]; 100]);
        let a = load_wav(&p).unwrap();
        assert_eq!(a.samples, vec![0.0; 100]);
    }

    #[test]
    fn stereo_returns_first_channel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stereo.wav");
        let frames: Vec<Vec<i32>> = (0..50).map(|i| vec![i * 100, -1000]).collect();
        write_int(&p, 2, 16, 8000, &frames);
        let a = load_wav(&p).unwrap();
        assert_eq!(a.samples.len(), 50);
        assert_eq!(a.samples[3], 300.0 / 32768.0);
    }

    #[test]
    fn other_bit_depths_scale_by_half_range() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("b8.wav");
        write_int(&p8, 1, 8, 2000, &[vec![64], vec![-128]]);
        assert_eq!(load_wav(&p8).unwrap().samples, vec![0.5, -1.0]);

        let p24 = dir.path().join("b24.wav");
        write_int(&p24, 1, 24, 2000, &[vec![1 << 22]]);
        assert_eq!(load_wav(&p24).unwrap().samples, vec![0.5]);

        let p32 = dir.path().join("b32.wav");
        write_int(&p32, 1, 32, 2000, &[vec![1 << 30]]);
        assert_eq!(load_wav(&p32).unwrap().samples, vec![0.5]);
    }

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        write_wav_f32(&p, &[0.25, -0.75], 2000).unwrap();
        let a = load_wav(&p).unwrap();
        assert_eq!(a.samples, vec![0.25, -0.75]);
    }

    #[test]
    fn error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_wav(dir.path().join("missing.wav")),
            Err(Error::Io { .. })
        ));

        let empty = dir.path().join("empty.wav");
        write_int(&empty, 1, 16, 2000, &[]);
        assert!(matches!(load_wav(&empty), Err(Error::Format(_))));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"RIFF\x04\x00\x00\x00MP3 not a wave").unwrap();
        assert!(matches!(load_wav(&junk), Err(Error::Format(_))));
    }
}
