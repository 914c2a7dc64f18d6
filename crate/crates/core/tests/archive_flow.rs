use forkpoint::forge::{build_samples, emit_dataset, read_dataset};
use forkpoint::fork::{pair_group, DetectConfig};
use forkpoint::sim::{fault_policy, optimal_policy, perturb_task, scripted_rollout};
use forkpoint::trajectory::{group_by_task, load_archive_root, save_trajectory, Verdict};

#[test]
fn simulated_group_survives_the_archive_and_forges_samples() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("archives");
    let mut written = Vec::new();
    for (template, seed) in [("maze", 21u64), ("toggle", 5)] {
        let task = perturb_task(template, seed).unwrap();
        let good = scripted_rollout(&task, &optimal_policy(&task).unwrap(), &format!("{}-ok", task.task_id)).unwrap();
        assert_eq!(good.verdict, Verdict::Success);
        save_trajectory(&good, &root.join(&good.trajectory_id)).unwrap();
        written.push(good);
        for k in [0, 1] {
            let bad = scripted_rollout(
                &task,
                &fault_policy(&task, k).unwrap(),
                &format!("{}-f{k}", task.task_id),
            )
            .unwrap();
            assert_eq!(bad.verdict, Verdict::Failure);
            save_trajectory(&bad, &root.join(&bad.trajectory_id)).unwrap();
            written.push(bad);
        }
    }

    let loaded = load_archive_root(&root).unwrap();
    assert_eq!(loaded.len(), written.len());
    for t in &loaded {
        let original = written.iter().find(|w| w.trajectory_id == t.trajectory_id).unwrap();
        assert_eq!(t, original);
    }

    let cfg = DetectConfig::default();
    let mut samples = Vec::new();
    for group in group_by_task(loaded).unwrap() {
        let pairing = pair_group(&group, &cfg).unwrap();
        assert_eq!(pairing.len(), 2, "{}", group.task_id());
        samples.extend(build_samples(&pairing, &group, 30).unwrap());
    }
    // every injected fault yields at least one corrective sample
    for (task, k) in [("maze-21", 0), ("maze-21", 1), ("toggle-5", 0), ("toggle-5", 1)] {
        let id = format!("{task}-f{k}");
        assert!(
            samples
                .iter()
                .any(|s| s.failed_trajectory_id == id && s.fork_failed_step == k),
            "no sample for {id}"
        );
    }

    let out = dir.path().join("grsd.jsonl");
    let n = emit_dataset(&samples, root.to_str().unwrap(), &out).unwrap();
    assert_eq!(n, samples.len());
    let (header, back) = read_dataset(&out).unwrap();
    assert_eq!(header.archive_root, root.to_str().unwrap());
    assert_eq!(back, samples);
}
