//! Synthetic exam corpora shaped like real Bacalaureat exam sheets: sectioned,
//! office points granted up front, grid items plus open items with barem
//! criteria. Deterministic for a given seed.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::corpus::{
    CriterionFile, ExamFile, OptionFile, QuestionFile, QuestionKind, SchemeEntryFile, SectionFile,
    FORMAT_VERSION,
};

pub const COMPUTER_SCIENCE: &str = "Computer Science";
pub const ROMANIAN: &str = "Romanian Language & Literature";

/// What the generator produced, independent of what the store says.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub documents: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub exam_id: String,
    pub subject: String,
    pub year: i32,
    pub variant_label: String,
    pub office_points: u32,
    pub total_points: u32,
    pub question_points: BTreeMap<String, u32>,
}

/// Ten exams: both subjects, 2020 through 2024, one official variant each.
pub fn standard_corpus() -> Manifest {
    corpus(&[COMPUTER_SCIENCE, ROMANIAN], 2020..=2024, 1, 7)
}

pub fn corpus(
    subjects: &[&str],
    years: std::ops::RangeInclusive<i32>,
    variants_per_year: usize,
    seed: u64,
) -> Manifest {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut documents = Vec::new();
    let mut entries = Vec::new();
    for subject in subjects {
        for year in years.clone() {
            for v in 0..variants_per_year {
                let (exam_id, variant_label) = if v == 0 {
                    (
                        format!("{}-{year}-oficial", slug(subject)),
                        format!("{year} official"),
                    )
                } else {
                    let letter = (b'A' + (v - 1) as u8) as char;
                    (
                        format!(
                            "{}-{year}-model-{}",
                            slug(subject),
                            letter.to_ascii_lowercase()
                        ),
                        format!("{year} model {letter}"),
                    )
                };
                let file = if *subject == COMPUTER_SCIENCE {
                    cs_exam(&mut rng, &exam_id, year, &variant_label)
                } else {
                    open_heavy_exam(&mut rng, &exam_id, subject, year, &variant_label)
                };
                entries.push(ManifestEntry {
                    exam_id: exam_id.clone(),
                    subject: subject.to_string(),
                    year,
                    variant_label,
                    office_points: file.office_points as u32,
                    total_points: file.total_points as u32,
                    question_points: file
                        .sections
                        .iter()
                        .flat_map(|s| &s.questions)
                        .map(|q| (q.question_id.clone(), q.max_points as u32))
                        .collect(),
                });
                documents.push(file.to_json_pretty());
            }
        }
    }
    Manifest { documents, entries }
}

fn slug(subject: &str) -> String {
    match subject {
        COMPUTER_SCIENCE => "info".into(),
        ROMANIAN => "romana".into(),
        other => other
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_lowercase(),
    }
}

const CS_STEMS: &[&str] = &[
    "Indicați expresia C/C++ care are valoarea 1 dacă și numai dacă numărul natural memorat în variabila x este par.",
    "Variabila i este de tip întreg. Indicați ce se afișează în urma executării secvenței:\n```\nfor(i=1;i<=5;i++) cout<<i%3;\n```",
    "Un graf neorientat are 6 noduri și 7 muchii. Indicați numărul minim de componente conexe.",
    "Se consideră subprogramul f, definit mai jos. Indicați valoarea f(5).\n```\nint f(int n){ if(n==0) return 0; return n+f(n-1); }\n```",
    "Indicați care dintre următoarele șiruri este ordonat crescător.",
    "Într-un arbore cu rădăcină, nodul 1 are trei descendenți direcți. Indicați afirmațiile adevărate.",
];

const OPEN_STEMS: &[&str] = &[
    "Scrieți ce se afișează în urma executării algoritmului dat, dacă se citește numărul 2318.",
    "Scrieți programul C/C++ care citește de la tastatură un număr natural n și afișează suma cifrelor pare ale lui n.",
    "Scrieți definiția completă a subprogramului divizori, care primește prin parametrul n un număr natural și returnează numărul de divizori ai lui n.",
    "Precizați două mijloace de caracterizare a personajului, ilustrate în fragmentul dat.",
    "Redactează un text de minimum 150 de cuvinte în care să argumentezi dacă familia reprezintă un reper esențial.",
    "Prezintă, în minimum 400 de cuvinte, particularități de construcție a unui personaj dintr-o nuvelă studiată.",
    "Explică rolul unei figuri de stil identificate în ultima strofă.",
];

const CRITERIA: &[&str] = &[
    "structură repetitivă corectă",
    "citirea datelor",
    "afișarea rezultatului",
    "declararea corectă a variabilelor",
    "antetul subprogramului",
    "instrucțiune de decizie conformă enunțului",
    "precizarea a două elemente de conținut",
    "ilustrarea adecvată prin citat",
    "respectarea normelor de exprimare și ortografie",
    "logica înlănțuirii ideilor",
];

fn choice_question(
    rng: &mut StdRng,
    id: &str,
    kind: QuestionKind,
    n_options: usize,
    points: i64,
) -> (QuestionFile, SchemeEntryFile) {
    let labels: Vec<String> = (0..n_options)
        .map(|i| ((b'a' + i as u8) as char).to_string())
        .collect();
    let options = labels
        .iter()
        .map(|l| OptionFile {
            label: l.clone(),
            text: format!("varianta {l}: {}", rng.gen_range(0..100)),
        })
        .collect();
    let mut correct: Vec<String> = match kind {
        QuestionKind::SingleChoice => vec![labels.choose(rng).unwrap().clone()],
        _ => {
            let k = rng.gen_range(1..=n_options.min(3));
            labels.choose_multiple(rng, k).cloned().collect()
        }
    };
    correct.sort();
    (
        QuestionFile {
            question_id: id.to_string(),
            kind,
            prompt: CS_STEMS.choose(rng).unwrap().to_string(),
            options: Some(options),
            max_points: points,
        },
        SchemeEntryFile {
            correct_options: Some(correct),
            criteria: None,
        },
    )
}

fn open_question(rng: &mut StdRng, id: &str, points: i64) -> (QuestionFile, SchemeEntryFile) {
    let n = rng.gen_range(1..=points.clamp(1, 4) as usize);
    // Split `points` into n positive parts.
    let mut cuts: Vec<i64> = (1..points).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<i64> = cuts.into_iter().take(n - 1).collect();
    cuts.sort();
    let mut parts = Vec::with_capacity(n);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(points)) {
        parts.push(c - prev);
        prev = c;
    }
    let criteria = parts
        .into_iter()
        .map(|p| CriterionFile {
            text: CRITERIA.choose(rng).unwrap().to_string(),
            points: p,
        })
        .collect();
    (
        QuestionFile {
            question_id: id.to_string(),
            kind: QuestionKind::OpenText,
            prompt: OPEN_STEMS.choose(rng).unwrap().to_string(),
            options: None,
            max_points: points,
        },
        SchemeEntryFile {
            correct_options: None,
            criteria: Some(criteria),
        },
    )
}

fn assemble(
    exam_id: &str,
    subject: &str,
    year: i32,
    variant_label: &str,
    sections: Vec<(String, Vec<(QuestionFile, SchemeEntryFile)>)>,
) -> ExamFile {
    let office_points = 10;
    let mut scheme = BTreeMap::new();
    let mut out_sections = Vec::new();
    let mut sum = 0;
    for (label, qs) in sections {
        let mut questions = Vec::new();
        for (q, s) in qs {
            sum += q.max_points;
            scheme.insert(q.question_id.clone(), s);
            questions.push(q);
        }
        out_sections.push(SectionFile {
            section_label: label,
            questions,
        });
    }
    ExamFile {
        format_version: FORMAT_VERSION,
        exam_id: exam_id.to_string(),
        subject: subject.to_string(),
        year: year.into(),
        variant_label: variant_label.to_string(),
        time_limit_minutes: 180,
        office_points,
        total_points: office_points + sum,
        sections: out_sections,
        scheme,
    }
}

fn cs_exam(rng: &mut StdRng, exam_id: &str, year: i32, variant_label: &str) -> ExamFile {
    let mut s1 = Vec::new();
    for i in 1..=5 {
        let (kind, n) = match i {
            4 => (QuestionKind::MultipleChoice, 4),
            5 => (QuestionKind::MultipleChoice, 5),
            _ => (QuestionKind::SingleChoice, 4),
        };
        s1.push(choice_question(rng, &format!("I.{i}"), kind, n, 4));
    }
    let s2 = [10, 15, 15]
        .iter()
        .enumerate()
        .map(|(i, &p)| open_question(rng, &format!("II.{}", i + 1), p))
        .collect();
    let s3 = [10, 10, 10]
        .iter()
        .enumerate()
        .map(|(i, &p)| open_question(rng, &format!("III.{}", i + 1), p))
        .collect();
    assemble(
        exam_id,
        COMPUTER_SCIENCE,
        year,
        variant_label,
        vec![
            ("SUBIECTUL I".into(), s1),
            ("SUBIECTUL AL II-LEA".into(), s2),
            ("SUBIECTUL AL III-LEA".into(), s3),
        ],
    )
}

fn open_heavy_exam(
    rng: &mut StdRng,
    exam_id: &str,
    subject: &str,
    year: i32,
    variant_label: &str,
) -> ExamFile {
    let mut s1: Vec<_> = (1..=5)
        .map(|i| open_question(rng, &format!("I.A.{i}"), 6))
        .collect();
    s1.push(choice_question(
        rng,
        "I.A.6",
        QuestionKind::SingleChoice,
        3,
        2,
    ));
    s1.push(open_question(rng, "I.B", 18));
    assemble(
        exam_id,
        subject,
        year,
        variant_label,
        vec![
            ("SUBIECTUL I".into(), s1),
            (
                "SUBIECTUL AL II-LEA".into(),
                vec![open_question(rng, "II", 10)],
            ),
            (
                "SUBIECTUL AL III-LEA".into(),
                vec![open_question(rng, "III", 30)],
            ),
        ],
    )
}

/// A hand-written two-question exam used throughout the unit tests:
/// one 6-point single-choice item and one 10-point open item (4 + 3 + 3),
/// 10 office points, 26 in total.
pub fn small_cs_exam_json() -> String {
    r#"{
  "format_version": 1,
  "exam_id": "info-2023-test",
  "subject": "Computer Science",
  "year": 2023,
  "variant_label": "2023 official",
  "time_limit_minutes": 180,
  "office_points": 10,
  "total_points": 26,
  "sections": [
    {
      "section_label": "SUBIECTUL I",
      "questions": [
        {
          "question_id": "I.1",
          "kind": "single_choice",
          "prompt": "Indicați expresia care are valoarea 1 dacă și numai dacă x este par.",
          "options": [
            {"label": "a", "text": "x%2==1"},
            {"label": "b", "text": "x%2==0"},
            {"label": "c", "text": "x/2==0"},
            {"label": "d", "text": "x==2"}
          ],
          "max_points": 6
        }
      ]
    },
    {
      "section_label": "SUBIECTUL AL II-LEA",
      "questions": [
        {
          "question_id": "II.1",
          "kind": "open_text",
          "prompt": "Scrieți programul care afișează suma cifrelor lui n.\n```\ncin>>n;\n```",
          "max_points": 10
        }
      ]
    }
  ],
  "scheme": {
    "I.1": {"correct_options": ["b"]},
    "II.1": {"criteria": [
      {"text": "citirea datelor", "points": 4},
      {"text": "calculul sumei", "points": 3},
      {"text": "afișarea rezultatului", "points": 3}
    ]}
  }
}"#
    .to_string()
}
