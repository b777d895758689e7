from dataclasses import replace

import numpy.testing as npt
import pytest

from core.errors import SchemaError
from core.preprocessing import SensorSequence, SessionProcessor
from core.synthdata import default_classes, generate_sessions
from core.window_store import WindowStore, hash_session


@pytest.fixture(scope="module")
def sessions():
    split = generate_sessions(default_classes(2, 0.05), {"train": 2, "val": 1, "test": 1}, seed=0)
    return [session for name in ("train", "val", "test") for session in split[name]]


@pytest.fixture
def processor():
    return SessionProcessor()


def shifted(session, offset=1.0):
    sensor = SensorSequence(session.sensor.rate, session.sensor.values + offset)
    return replace(session, sensor=sensor)


def test_first_refresh_processes_everything(tmp_path, sessions, processor):
    stats = WindowStore(tmp_path).refresh(sessions, processor)
    assert stats == {"total_sessions": 8, "processed": 8, "skipped": 0, "deleted": 0, "windows": 8}


def test_unchanged_sessions_are_skipped(tmp_path, sessions, processor):
    WindowStore(tmp_path).refresh(sessions, processor)
    stats = WindowStore(tmp_path).refresh(sessions, processor)
    assert stats["processed"] == 0
    assert stats["skipped"] == 8
    assert stats["windows"] == 8


def test_changed_session_is_reprocessed(tmp_path, sessions, processor):
    store = WindowStore(tmp_path)
    store.refresh(sessions, processor)
    changed = [shifted(sessions[0])] + sessions[1:]
    assert hash_session(changed[0]) != hash_session(sessions[0])
    stats = store.refresh(changed, processor)
    assert (stats["processed"], stats["skipped"]) == (1, 7)
    [window] = store.load_session(sessions[0].session_id)
    npt.assert_allclose(window.sensor, sessions[0].sensor.values.T + 1.0)


def test_vanished_session_is_removed(tmp_path, sessions, processor):
    store = WindowStore(tmp_path)
    store.refresh(sessions, processor)
    stats = store.refresh(sessions[1:], processor)
    assert stats["deleted"] == 1
    assert sessions[0].session_id not in store.session_ids()
    assert not (tmp_path / "sessions" / sessions[0].session_id).exists()


def test_new_settings_force_a_full_rerun(tmp_path, sessions, processor):
    store = WindowStore(tmp_path)
    store.refresh(sessions, processor)
    stats = store.refresh(sessions, SessionProcessor(order="normalize-first"))
    assert stats["processed"] == 8


def test_force_flag(tmp_path, sessions, processor):
    store = WindowStore(tmp_path)
    store.refresh(sessions, processor)
    assert store.refresh(sessions, processor, force=True)["processed"] == 8


def test_stored_windows_match_processing(tmp_path, sessions, processor):
    store = WindowStore(tmp_path)
    store.refresh(sessions, processor)
    expected = [w for s in sessions if s.split == "train" for w in processor.process(s)]
    loaded = store.load_split("train")
    assert [w.session_id for w in loaded] == [w.session_id for w in expected]
    for got, want in zip(loaded, expected):
        assert got.label == want.label and got.start == want.start
        npt.assert_array_equal(got.pose, want.pose)
        npt.assert_array_equal(got.sensor, want.sensor)


def test_status(tmp_path, sessions, processor):
    store = WindowStore(tmp_path)
    store.refresh(sessions, processor)
    status = store.status()
    assert status["sessions"] == 8
    assert status["windows_per_split"] == {"train": 4, "val": 2, "test": 2}
    assert status["last_updated"] is not None


def test_corrupt_index_is_rebuilt(tmp_path, sessions, processor):
    (tmp_path / "index.json").write_text("{not json")
    stats = WindowStore(tmp_path).refresh(sessions, processor)
    assert stats["processed"] == 8


@pytest.mark.parametrize("session_id", ["a/b", "..", "a\\b", ""])
def test_unsafe_session_ids(tmp_path, sessions, processor, session_id):
    with pytest.raises(SchemaError):
        WindowStore(tmp_path).refresh([replace(sessions[0], session_id=session_id)], processor)
