#include "catch2/catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "support.h"
#include "transcript_builder.h"
#include "viva/audit/store.h"

using namespace viva;
using namespace viva::test;
using namespace viva::audit;

namespace {

Clock clock0() { return stepping_clock(test::at("2026-01-31T09:00:00Z"), std::chrono::seconds(1)); }

// Backend whose stored bytes the test can reach and edit.
class OpenBackend final : public StorageBackend {
 public:
  struct Record {
    std::string header, submission;
    std::vector<std::string> lines;
    bool sealed = false;
  };
  std::map<std::string, Record> records;

  void create(const std::string& id, const std::string& h, const std::string& s) override {
    records[id] = Record{h, s, {}, false};
  }
  void append_line(const std::string& id, const std::string& line) override {
    records.at(id).lines.push_back(line);
  }
  void mark_sealed(const std::string& id) override { records.at(id).sealed = true; }
  bool exists(const std::string& id) const override { return records.count(id) != 0; }
  std::string read_header(const std::string& id) const override { return records.at(id).header; }
  std::string read_submission(const std::string& id) const override {
    return records.at(id).submission;
  }
  std::vector<std::string> read_lines(const std::string& id) const override {
    return records.at(id).lines;
  }
  bool is_sealed(const std::string& id) const override { return records.at(id).sealed; }
  std::vector<std::string> list() const override {
    std::vector<std::string> ids;
    for (const auto& [id, _] : records) ids.push_back(id);
    return ids;
  }
};

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("viva-store-" + random_hex(6));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

const std::string kEssay = "An essay about the sabbatical year and the remission of debts in law.";

}  // namespace

TEST_CASE("append assigns seq and links hashes", "[store]") {
  TranscriptStore store;
  auto clock = clock0();
  test::open_session(store, "s1", kEssay, clock);
  const auto e1 = store.append("s1", Role::kExaminer, "Q?", clock());
  const auto e2 = store.append("s1", Role::kCandidate, "A.", clock());
  CHECK(e1.seq == 1);
  CHECK(e2.seq == 2);
  CHECK(e2.prev_hash == e1.entry_hash);
  CHECK(store.entries("s1").front().prev_hash == kZeroHash);
  CHECK(store.verify_chain("s1").valid);
}

TEST_CASE("store errors", "[store]") {
  TranscriptStore store;
  auto clock = clock0();
  CHECK(test::error_of([&] { store.append("nope", Role::kNote, "x", clock()); }) ==
        ErrorCode::kUnknownSession);
  test::open_session(store, "s1", kEssay, clock);
  CHECK(test::error_of([&] { test::open_session(store, "s1", kEssay, clock); }) ==
        ErrorCode::kStorageFailure);
  CHECK(test::error_of([&] { test::open_session(store, "../etc", kEssay, clock); }) ==
        ErrorCode::kStorageFailure);
  CHECK(test::error_of([&] { store.export_document("s1", "pdf"); }) ==
        ErrorCode::kUnsupportedFormat);
}

TEST_CASE("verdict seals; sealed sessions refuse appends", "[store]") {
  TranscriptStore store;
  auto clock = clock0();
  test::open_session(store, "s1", kEssay, clock);
  test::complete_session(store, "s1", clock);
  CHECK(store.is_sealed("s1"));
  CHECK(test::error_of([&] { store.append("s1", Role::kNote, "late", clock()); }) ==
        ErrorCode::kSessionSealed);

  test::open_session(store, "s2", kEssay, clock);
  store.seal("s2");
  store.seal("s2");
  CHECK(store.is_sealed("s2"));
  CHECK(test::error_of([&] { store.append("s2", Role::kNote, "late", clock()); }) ==
        ErrorCode::kSessionSealed);
}

TEST_CASE("session ids", "[store]") {
  CHECK(is_valid_session_id("abc-DEF_123"));
  CHECK_FALSE(is_valid_session_id(""));
  CHECK_FALSE(is_valid_session_id("a/b"));
  CHECK_FALSE(is_valid_session_id(".."));
  CHECK_FALSE(is_valid_session_id(std::string(65, 'a')));
}

TEST_CASE("every single-byte mutation of a stored entry is detected", "[store]") {
  auto backend = std::make_unique<OpenBackend>();
  auto* open = backend.get();
  TranscriptStore store(std::move(backend));
  auto clock = clock0();
  test::open_session(store, "s1", kEssay, clock);
  test::complete_session(store, "s1", clock);
  REQUIRE(store.verify_chain("s1").valid);

  auto& lines = open->records.at("s1").lines;
  std::size_t mutations = 0;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    for (std::size_t bi = 0; bi < lines[li].size(); ++bi) {
      const char original = lines[li][bi];
      for (const unsigned char delta : {0x01, 0x20, 0x80}) {
        lines[li][bi] = static_cast<char>(original ^ delta);
        const auto r = store.verify_chain("s1");
        INFO("line " << li << " byte " << bi << " delta " << int(delta));
        REQUIRE_FALSE(r.valid);
        CHECK(r.broken_seq == li);
        ++mutations;
      }
      lines[li][bi] = original;
    }
  }
  CHECK(mutations > 1000);
  CHECK(store.verify_chain("s1").valid);
}

TEST_CASE("header and submission tampering is detected", "[store]") {
  auto backend = std::make_unique<OpenBackend>();
  auto* open = backend.get();
  TranscriptStore store(std::move(backend));
  auto clock = clock0();
  test::open_session(store, "s1", kEssay, clock);
  auto& rec = open->records.at("s1");

  const auto header = rec.header;
  rec.header.replace(rec.header.find("\"min_questions\":2"), 17, "\"min_questions\":1");
  CHECK_FALSE(store.verify_chain("s1").valid);
  rec.header = header;

  const auto sub = rec.submission;
  rec.submission.replace(rec.submission.find("sabbatical"), 10, "Sabbatical");
  CHECK_FALSE(store.verify_chain("s1").valid);
  rec.submission = sub;
  CHECK(store.verify_chain("s1").valid);
}

TEST_CASE("exports verify and detect any byte change", "[store]") {
  TranscriptStore store;
  auto clock = clock0();
  test::open_session(store, "s1", kEssay, clock);
  test::complete_session(store, "s1", clock);
  const auto doc = store.export_document("s1", "json");
  const auto r = verify_export(doc);
  CHECK(r.valid);
  CHECK(r.entries_checked == store.entries("s1").size());

  const auto parsed = parse_export(doc);
  CHECK(parsed.sealed);
  REQUIRE(parsed.verdict.has_value());
  CHECK(parsed.verdict->confidence_score == 70);
  CHECK(export_json(parsed.header, parsed.submission, parsed.entries, parsed.sealed) == doc);

  for (std::size_t i = 0; i < doc.size(); i += 7) {
    auto bad = doc;
    bad[i] = static_cast<char>(bad[i] ^ 0x01);
    bool detected = true;
    try {
      detected = !verify_export(bad).valid;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParseError);
    }
    INFO("byte " << i);
    CHECK(detected);
  }

  auto unsealed = parsed;
  CHECK_FALSE(
      verify_export(export_json(unsealed.header, unsealed.submission, unsealed.entries, false)).valid);
  CHECK(test::error_of([] { verify_export("{}"); }) == ErrorCode::kParseError);
}

TEST_CASE("text export layout", "[store]") {
  TranscriptStore store;
  auto clock = clock0();
  test::open_session(store, "s1", kEssay, clock);
  test::complete_session(store, "s1", clock);
  const auto text = store.export_document("s1", "text");
  CHECK(text.rfind("=== TRANSCRIPT HEADER ===\n", 0) == 0);
  CHECK(text.find("\n\n[Examiner] Question 1?\n") != std::string::npos);
  CHECK(text.find("\n\n[Candidate] Answer 2\n") != std::string::npos);
  CHECK(text.find("=== VERDICT ===\nconfidence_score: 70\n") != std::string::npos);
  CHECK(text.find("sealed: yes") != std::string::npos);
}

TEST_CASE("subscriptions replay then follow live appends", "[store]") {
  TranscriptStore store;
  auto clock = clock0();
  test::open_session(store, "s1", kEssay, clock);
  store.append("s1", Role::kExaminer, "Q1?", clock());

  auto sub = store.subscribe("s1", 1);
  auto n = sub.next(std::chrono::milliseconds(100));
  REQUIRE(n.status == Subscription::Status::kEntry);
  CHECK(n.entry->content == "Q1?");
  CHECK(sub.next(std::chrono::milliseconds(20)).status == Subscription::Status::kTimeout);

  std::vector<std::uint64_t> seen;
  std::thread reader([&] {
    auto s = store.subscribe("s1", 0);
    for (;;) {
      auto next = s.next(std::chrono::seconds(5));
      if (next.status != Subscription::Status::kEntry) break;
      seen.push_back(next.entry->seq);
    }
  });
  std::thread writer([&] {
    for (int i = 0; i < 50; ++i) store.append("s1", Role::kNote, "n" + std::to_string(i), clock());
    store.seal("s1");
  });
  writer.join();
  reader.join();
  const auto total = store.entries("s1").size();
  REQUIRE(seen.size() == total);
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
}

TEST_CASE("concurrent appends to different sessions", "[store]") {
  TranscriptStore store;
  auto clock = clock0();
  for (int i = 0; i < 8; ++i) test::open_session(store, "c" + std::to_string(i), kEssay, clock);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      const auto id = "c" + std::to_string(i);
      for (int k = 0; k < 100; ++k) store.append(id, Role::kNote, id + ":" + std::to_string(k), clock());
    });
  }
  for (auto& t : threads) t.join();
  for (int i = 0; i < 8; ++i) {
    const auto id = "c" + std::to_string(i);
    CHECK(store.verify_chain(id).valid);
    for (const auto& e : store.entries(id)) {
      if (e.role == Role::kNote && e.content.rfind("c", 0) == 0) CHECK(e.content.rfind(id + ":", 0) == 0);
    }
  }
}

TEST_CASE("directory backend persists and reloads", "[store]") {
  TempDir dir;
  auto clock = clock0();
  std::string exported;
  {
    TranscriptStore store(directory_backend(dir.path));
    test::open_session(store, "d1", kEssay, clock);
    test::complete_session(store, "d1", clock);
    test::open_session(store, "d2", kEssay, clock);
    store.append("d2", Role::kExaminer, "Open question?", clock());
    exported = store.export_document("d1", "json");
  }
  CHECK(std::filesystem::exists(dir.path / "d1" / "SEALED"));
  CHECK_FALSE(std::filesystem::exists(dir.path / "d2" / "SEALED"));

  TranscriptStore reloaded(directory_backend(dir.path));
  CHECK(reloaded.session_ids() == std::vector<std::string>{"d1", "d2"});
  CHECK(reloaded.is_sealed("d1"));
  CHECK_FALSE(reloaded.is_sealed("d2"));
  CHECK(reloaded.export_document("d1", "json") == exported);
  CHECK(reloaded.verify_chain("d2").valid);
  const auto before = reloaded.entries("d2").size();
  const auto e = reloaded.append("d2", Role::kCandidate, "An answer.", clock());
  CHECK(e.seq == before);
  CHECK(reloaded.verify_chain("d2").valid);

  // flip one byte on disk
  const auto file = dir.path / "d1" / "entries.jsonl";
  std::string bytes;
  {
    std::ifstream in(file, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() / 2] ^= 0x04;
  {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  CHECK_FALSE(reloaded.verify_chain("d1").valid);
}
