//! Full model checkpoint: encoder block, both heads, the mapping, the
//! vocabulary needed to featurize new text and an echo of the run config.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::encoder::checkpoint::{read_encoder_block, write_encoder_block, CheckpointReader, CheckpointWriter};
use crate::encoder::Vocabulary;
use crate::data::MappingMatrix;
use crate::error::{Error, Result};

use super::SepLLParams;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: SepLLParams,
    pub vocab: Vocabulary,
    pub class_names: Vec<String>,
    /// Single-line JSON echo of the configuration that produced the model.
    pub config_echo: String,
}

impl TrainedModel {
    pub fn write<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut cw = CheckpointWriter::new();
        let p = &self.params;
        write_encoder_block(&mut cw, &p.encoder);
        cw.mlp("task_head", &p.task_head, &format!("c={}", p.num_classes()));
        cw.mlp("lf_head", &p.lf_head, &format!("m={}", p.num_lfs()));
        let class_of: Vec<String> = p.mapping.class_of().iter().map(usize::to_string).collect();
        cw.line(format!(
            "mapping c={} m={} class_of={}",
            p.num_classes(),
            p.num_lfs(),
            class_of.join(",")
        ));
        cw.line(format!(
            "classes {}",
            serde_json::to_string(&self.class_names).expect("strings serialize")
        ));
        cw.line(format!(
            "vocab size={} docs={} lowercase={}",
            self.vocab.len(),
            self.vocab.n_docs(),
            self.vocab.lowercase()
        ));
        for (tok, df) in self.vocab.tokens().iter().zip(self.vocab.document_frequencies()) {
            cw.line(format!("t {tok} {df}"));
        }
        let echo = self.config_echo.replace('\n', " ");
        cw.line(format!("config {echo}"));
        cw.finish(w)
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut cr = CheckpointReader::from_reader(r)?;
        let encoder = read_encoder_block(&mut cr)?;
        let (task_head, _) = cr.mlp("task_head")?;
        let (lf_head, _) = cr.mlp("lf_head")?;

        let mh = cr.expect("mapping")?;
        let c = mh.get_usize("c")?;
        let class_of = mh
            .get("class_of")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|_| Error::Data("corrupt checkpoint: bad class_of".into())))
            .collect::<Result<Vec<_>>>()?;
        if class_of.len() != mh.get_usize("m")? {
            return Err(Error::Data("corrupt checkpoint: class_of length disagrees with m".into()));
        }
        let mapping = MappingMatrix::new(class_of, c)?;
        let params = SepLLParams::from_parts(encoder, task_head, lf_head, mapping)?;

        let classes_line = cr.next_line()?;
        let class_names: Vec<String> = classes_line
            .strip_prefix("classes ")
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| Error::Data("corrupt checkpoint: bad classes line".into()))?;
        if class_names.len() != c {
            return Err(Error::Data("corrupt checkpoint: class names disagree with c".into()));
        }

        let vh = cr.expect("vocab")?;
        let size = vh.get_usize("size")?;
        let n_docs = vh.get_usize("docs")?;
        let lowercase = vh.get("lowercase")? == "true";
        let mut tokens = Vec::with_capacity(size);
        let mut df = Vec::with_capacity(size);
        for _ in 0..size {
            let t = cr.expect("t")?;
            let (Some(tok), Some(count)) = (t.words.first(), t.words.get(1).and_then(|s| s.parse().ok())) else {
                return Err(Error::Data("corrupt checkpoint: bad vocabulary line".into()));
            };
            tokens.push(tok.clone());
            df.push(count);
        }
        let vocab = Vocabulary::from_parts(tokens, df, n_docs, lowercase)?;
        if vocab.len() != params.encoder.net().input_dim() {
            return Err(Error::Data("corrupt checkpoint: vocabulary size disagrees with encoder input".into()));
        }

        let config_echo = cr
            .next_line()?
            .strip_prefix("config ")
            .ok_or_else(|| Error::Data("corrupt checkpoint: missing config line".into()))?
            .to_string();
        cr.finish()?;
        Ok(TrainedModel {
            params,
            vocab,
            class_names,
            config_echo,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}
