use foldgan::io::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint};
use foldgan::wgan::{train_wgan, GanArch, GanCheckpoint, GanTrainConfig};
use foldgan::{ClassLabel, Error, Heatmap, LabelledDataset};

/// A byte range of the file and the text a truncation inside it must report.
struct Region {
    start: usize,
    end: usize,
    expect: String,
    bulk: bool,
}

/// Walks the documented layout independently of the reader.
struct Walker<'a> {
    bytes: &'a [u8],
    pos: usize,
    regions: Vec<Region>,
}

impl Walker<'_> {
    fn field(&mut self, len: usize, expect: &str) -> &[u8] {
        self.regions.push(Region {
            start: self.pos,
            end: self.pos + len,
            expect: expect.to_string(),
            bulk: false,
        });
        self.pos += len;
        &self.bytes[self.pos - len..self.pos]
    }

    fn u32(&mut self, expect: &str) -> usize {
        u32::from_le_bytes(self.field(4, expect).try_into().unwrap()) as usize
    }

    fn tensors(&mut self, block: &str) {
        let count = self.u32(block);
        for i in 0..count {
            let slot = format!("{block} tensor #{i}");
            let name_len = self.u32(&slot);
            let name = String::from_utf8(self.field(name_len, &slot).to_vec()).unwrap();
            let rank = self.u32(&name);
            let mut len = 1;
            for _ in 0..rank {
                len *= self.u32(&name);
            }
            self.field(4 * len, &name);
            self.regions.last_mut().unwrap().bulk = true;
        }
    }

    fn adam(&mut self, prefix: &str) {
        self.field(8 + 16, prefix);
        self.tensors(&format!("{prefix}.m"));
        self.tensors(&format!("{prefix}.v"));
    }
}

fn layout(bytes: &[u8]) -> Vec<Region> {
    let mut w = Walker {
        bytes,
        pos: 0,
        regions: Vec::new(),
    };
    w.field(4, "magic");
    w.field(4 + 12 + 8 + 1 + 4 + 8, "");
    w.tensors("generator");
    if w.field(1, "training flag")[0] == 1 {
        w.tensors("critic");
        w.adam("critic_opt");
        w.adam("gen_opt");
    }
    assert_eq!(w.pos, bytes.len(), "layout walk must consume the whole file");
    w.regions
}

fn tiny_checkpoint() -> GanCheckpoint<f32> {
    let arch = GanArch {
        latent_dim: 2,
        ..GanArch::new(8, 8)
    };
    let items = (0..4)
        .map(|i| {
            let data = (0..64).map(|k| ((k + i) % 7) as f32 / 6.0).collect();
            Heatmap::from_row_major(8, 8, data, ClassLabel::Pool, true).unwrap()
        })
        .collect();
    let data = LabelledDataset::with_generated_ids(items, "t", 0).unwrap();
    let cfg = GanTrainConfig {
        epochs: 1,
        n_critic: 1,
        seed: 4,
        ..GanTrainConfig::default()
    };
    train_wgan(&data, &cfg, &arch).unwrap().checkpoint
}

#[test]
fn truncation_at_every_boundary_names_the_part() {
    let bytes = checkpoint_to_bytes(&tiny_checkpoint()).unwrap();
    let regions = layout(&bytes);
    let mut checked = 0;
    for r in &regions {
        // Inside bulk data every cut behaves the same; probe its edges and a stride.
        let cuts: Vec<usize> = if r.bulk && r.end - r.start > 64 {
            (r.start..r.start + 16)
                .chain((r.start..r.end).step_by(4093))
                .chain(r.end - 16..r.end)
                .collect()
        } else {
            (r.start..r.end).collect()
        };
        for cut in cuts {
            let err = checkpoint_from_bytes(&bytes[..cut]).unwrap_err();
            if r.expect == "magic" {
                assert!(matches!(err, Error::NotCheckpoint), "cut {cut}: {err}");
                assert_eq!(err.to_string(), "not a checkpoint (bad magic bytes)");
            } else {
                match &err {
                    Error::Truncated(what) => assert!(
                        what.contains(&r.expect),
                        "cut {cut}: '{what}' should mention '{}'",
                        r.expect
                    ),
                    other => panic!("cut {cut}: expected truncation, got {other}"),
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 1000);
    assert!(regions.iter().any(|r| r.expect.contains("batchnorm")));
    checkpoint_from_bytes(&bytes).unwrap();
}

#[test]
fn file_roundtrip_is_bit_exact() {
    let ckpt = tiny_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    save_checkpoint(&ckpt, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    for (a, b) in back.generator.params().iter().zip(ckpt.generator.params()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let gen_only = ckpt.clone().generator_only();
    save_checkpoint(&gen_only, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), gen_only);
}

#[test]
fn corrupted_files_are_rejected() {
    let bytes = checkpoint_to_bytes(&tiny_checkpoint().generator_only()).unwrap();

    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&7u32.to_le_bytes());
    let err = checkpoint_from_bytes(&version).unwrap_err();
    assert!(matches!(err, Error::Version { found: 7, expected: 1 }));
    assert!(err.to_string().contains("version 7"));

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(checkpoint_from_bytes(&trailing), Err(Error::Format(_))));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(checkpoint_from_bytes(&magic), Err(Error::NotCheckpoint)));

    // Claim a 16-row architecture: stored tensors no longer fit.
    let mut arch = bytes.clone();
    arch[8..12].copy_from_slice(&16u32.to_le_bytes());
    assert!(checkpoint_from_bytes(&arch).is_err());

    let mut flag = checkpoint_to_bytes(&tiny_checkpoint().generator_only()).unwrap();
    *flag.last_mut().unwrap() = 5;
    assert!(matches!(checkpoint_from_bytes(&flag), Err(Error::Format(_))));
}
