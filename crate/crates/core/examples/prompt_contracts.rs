//! The three prompt contracts: placeholders, rendering, and strict parsing of model output.

use std::collections::BTreeMap;

use edgeform::backends::prompts::TEMPLATES;
use edgeform::backends::{parse_feedback_json, parse_formation_csv, parse_motion_descriptor, PromptName, PromptTemplate};

fn main() {
    for t in &TEMPLATES {
        println!("{:?}: placeholders {:?}, output {:?}, {} chars", t.name, t.placeholders, t.output, t.text.len());
    }
    let fills = BTreeMap::from([
        ("SHAPE", "square".to_string()),
        ("N", "4".to_string()),
        ("SPACING", "2".to_string()),
        ("HEIGHT", "5".to_string()),
    ]);
    let prompt = PromptTemplate::get(PromptName::FormationInstruction).render(&fills).unwrap();
    println!("\nrendered tail:\n{}\n", prompt.lines().rev().take(4).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join("\n"));

    let intent = parse_motion_descriptor(
        "```json\n{\"mode\":\"track\",\"tracking\":true,\"groups\":[\"car1\",\"car2\"],\"formation\":\"circle\",\"even_split\":true,\"spacing\":3}\n```",
    )
    .unwrap();
    println!("descriptor -> {}", serde_json::to_string(&intent).unwrap());

    let t = parse_formation_csv("id,x,y,z\n0,-1,-1,5\n1,1,-1,5\n2,-1,1,5\n3,1,1,5\n", 4).unwrap();
    println!("formation  -> {:?}", t.offsets.iter().map(|o| [o.x, o.y, o.z]).collect::<Vec<_>>());

    let v = parse_feedback_json(r#"{"feedback": true, "reason": "One cluster but multiple groups requested."}"#).unwrap();
    println!("feedback   -> consistent={} reason={:?}", v.consistent, v.reason);

    let errors = [
        ("descriptor", parse_motion_descriptor("").err()),
        ("descriptor", parse_motion_descriptor(r#"{"mode":"track"} thanks!"#).err()),
        ("descriptor", parse_motion_descriptor(r#"{"mode":"orbit"}"#).err()),
        ("feedback", parse_feedback_json(r#"{"feedback": "yes", "reason": "ok"}"#).err()),
        ("csv", parse_formation_csv("id,x,y,z\n0,0,0,0\n0,1,0,0\n", 2).err()),
        ("csv", parse_formation_csv("x,y,z\n0,0,0\n", 1).err()),
    ];
    for (kind, err) in errors {
        println!("{kind:<10} rejected: {}", err.map_or("accepted".into(), |e| e.to_string()));
    }
}
