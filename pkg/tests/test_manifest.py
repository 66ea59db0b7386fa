from compmech.manifest import RunManifest, canonical_json, config_hash, file_digest


def test_digest_tracks_content(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("one")
    first = file_digest(p)
    assert first.startswith("sha256:")
    p.write_text("two!")
    assert file_digest(p) != first
    assert file_digest(tmp_path / "none") is None
    assert file_digest(None) is None


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_manifest_round_trip_and_verify(tmp_path):
    art = tmp_path / "x.csv"
    art.write_text("layer\n0\n")
    m = RunManifest("run ablation", None, config_hash({}), None, None)
    m.add(art)
    m.finish()
    path = m.write(tmp_path / "manifest.json")
    again = RunManifest.read(path)
    assert again == m and again.verify()
    art.write_text("tampered\n")
    assert not again.verify()
