//! Image classification: whole images grouped into one multi-choice query
//! per batch.

use std::sync::Arc;

use super::ChainError;
use crate::backend::{
    AnswerPayload, BackendError, ChoiceItem, Query, QueryKind, Session, SourceImage, Transcript,
    ViewSpec,
};

/// Classify a batch of images in one query. Returns one vocabulary id per
/// image, in input order. On a positional mismatch the batch falls back to
/// per-image queries; a per-image failure is reported in that image's slot.
#[allow(clippy::too_many_arguments)]
pub fn classify_batch(
    session: &Session,
    vocab: &Arc<Vec<String>>,
    images: &[(String, SourceImage)],
    template_id: &str,
    blank: Option<[u8; 3]>,
    transcript: &mut Transcript,
) -> Vec<Result<u16, ChainError>> {
    assert!(!images.is_empty());
    let batched = session.config().batching && images.len() > 1;
    if batched {
        let query = build_query(vocab, images, template_id, blank);
        match session.answer(&query, transcript) {
            Ok(answer) => {
                if let AnswerPayload::Choices(choices) = answer.payload {
                    return choices
                        .into_iter()
                        .map(|c| class_id(vocab, &c))
                        .collect();
                }
                unreachable!("multi-choice answers carry choices");
            }
            Err(BackendError::InvalidAnswer { .. }) => {
                // fall through to per-image queries
            }
            Err(e) => {
                let message = e.to_string();
                return images
                    .iter()
                    .map(|_| Err(ChainError::Backend(BackendError::Transport(message.clone()))))
                    .collect();
            }
        }
    }
    images
        .iter()
        .map(|pair| {
            let query = build_query(vocab, std::slice::from_ref(pair), template_id, blank);
            match session.answer(&query, transcript) {
                Ok(answer) => match answer.payload {
                    AnswerPayload::Choices(mut c) => class_id(vocab, &c.remove(0)),
                    _ => unreachable!(),
                },
                Err(e) => Err(ChainError::Backend(e)),
            }
        })
        .collect()
}

fn build_query(
    vocab: &Arc<Vec<String>>,
    images: &[(String, SourceImage)],
    template_id: &str,
    blank: Option<[u8; 3]>,
) -> Query {
    let items: Vec<ChoiceItem> = images
        .iter()
        .enumerate()
        .map(|(i, (id, source))| {
            ChoiceItem::new(
                vec![crate::backend::ImageRef::new(
                    source.clone(),
                    ViewSpec::full().with_blank(blank),
                )],
                crate::backend::RegionSpec::FullImage,
                format!("image {}", i + 1),
            )
            .for_image(id.clone())
        })
        .collect();
    Query {
        image_id: images[0].0.clone(),
        template_id: template_id.to_string(),
        kind: QueryKind::MultiChoice {
            items,
            options: vocab.clone(),
            history: vec![],
        },
    }
}

fn class_id(vocab: &Arc<Vec<String>>, answer: &str) -> Result<u16, ChainError> {
    vocab
        .iter()
        .position(|o| o == answer)
        .map(|i| i as u16)
        .ok_or_else(|| ChainError::UnknownClass {
            answer: answer.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{
        GroundTruthSource, GroundedBackend, ImageGroundTruth, PriceTable, SessionConfig,
        TemplateRegistry,
    };
    use crate::core::{ClassVocabulary, RasterSize};
    use crate::raster::ImageBuffer;
    use std::collections::HashMap;

    struct Labels(HashMap<String, u16>);
    impl GroundTruthSource for Labels {
        fn ground_truth(&self, id: &str) -> Result<Arc<ImageGroundTruth>, BackendError> {
            Ok(Arc::new(ImageGroundTruth {
                label: self.0.get(id).copied(),
                ..Default::default()
            }))
        }
    }

    #[test]
    fn oracle_batch_equals_singles() {
        let names = vec!["cat".to_string(), "dog".to_string(), "owl".to_string()];
        let vocab = Arc::new(names.clone());
        let class_vocab = Arc::new(ClassVocabulary::new(names).unwrap());
        let labels: HashMap<String, u16> =
            [("a", 2u16), ("b", 0), ("c", 1), ("d", 2)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        let source: Arc<dyn GroundTruthSource> = Arc::new(Labels(labels.clone()));
        let images: Vec<(String, SourceImage)> = ["a", "b", "c", "d"]
            .iter()
            .map(|id| {
                (
                    id.to_string(),
                    SourceImage::new(Arc::new(ImageBuffer::new(RasterSize::new(4, 4), [7, 7, 7]))),
                )
            })
            .collect();

        let run = |batching: bool| {
            let backend = Arc::new(GroundedBackend::oracle(source.clone(), class_vocab.clone()));
            let session = Session::new(
                backend,
                TemplateRegistry::default(),
                None,
                PriceTable::default(),
                SessionConfig {
                    batching,
                    ..Default::default()
                },
            );
            let mut t = Transcript::new();
            let out: Vec<u16> = classify_batch(&session, &vocab, &images, "classify_v1", None, &mut t)
                .into_iter()
                .map(|r| r.unwrap())
                .collect();
            (out, t.len())
        };
        let (batched, batched_queries) = run(true);
        let (single, single_queries) = run(false);
        assert_eq!(batched, vec![2, 0, 1, 2]);
        assert_eq!(batched, single);
        assert_eq!(batched_queries, 1);
        assert_eq!(single_queries, 4);
    }
}
