#include "crux/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <mutex>
#include <numeric>
#include <random>
#include <set>

#include "crux/error.hpp"
#include "crux/metrics.hpp"
#include "jsonl.hpp"

namespace crux {

using detail::json;

// -- bundles ------------------------------------------------------------------

TaskBundle make_task_bundle(const Dataset& dataset, const std::vector<Generation>& generations,
                            std::size_t t2_per_topic, std::size_t questions_per_t2, std::uint64_t seed) {
    std::map<std::string, const Topic*> topics;
    for (const auto& t : dataset.topics) topics.emplace(t.topic_id, &t);

    TaskBundle bundle;
    for (const auto& g : generations) {
        auto it = topics.find(g.topic_id);
        if (it == topics.end()) throw ValidationError("generation for unknown topic " + g.topic_id);
        if (g.text.empty()) throw ValidationError("empty report for topic " + g.topic_id + " in run " + g.run_id);
        const Topic& topic = *it->second;
        T1Task task;
        task.task_id = "t1-" + g.run_id + "-" + g.topic_id;
        task.topic_id = g.topic_id;
        task.report = g.text;
        task.context_source = g.run_id;
        for (auto qi : topic.answerable_indices()) task.questions.push_back({qi, topic.questions[qi].text});
        if (!g.ratings.empty() && g.ratings.size() != task.questions.size())
            throw ValidationError("generation ratings do not match the answerable questions of " + g.topic_id);
        task.llm_ratings = g.ratings;
        bundle.t1.push_back(std::move(task));
    }

    std::mt19937_64 rng(seed);
    auto draw = [&](std::size_t pool, std::size_t want) {
        std::vector<std::size_t> idx(pool);
        std::iota(idx.begin(), idx.end(), 0);
        want = std::min(want, pool);
        for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + uniform_below(rng, pool - i)]);
        idx.resize(want);
        return idx;
    };
    for (const auto& topic : dataset.topics) {
        const auto& matrix = dataset.matrix(topic.topic_id);
        auto answerable = topic.answerable_indices();
        if (answerable.empty()) continue;
        for (auto j : draw(topic.oracle_passage_ids.size(), t2_per_topic)) {
            const auto& pid = topic.oracle_passage_ids[j];
            T2Task task;
            task.task_id = "t2-" + pid;
            task.topic_id = topic.topic_id;
            task.passage_id = pid;
            task.passage = dataset.corpus.at(pid).text;
            auto picks = draw(answerable.size(), questions_per_t2);
            std::sort(picks.begin(), picks.end());
            for (auto p : picks) {
                auto qi = answerable[p];
                task.questions.push_back({qi, topic.questions[qi].text});
                task.llm_ratings.push_back(matrix.at(qi, *matrix.column_of(pid)));
            }
            bundle.t2.push_back(std::move(task));
        }
    }
    return bundle;
}

// -- spans --------------------------------------------------------------------

std::vector<Span> normalize_spans(std::vector<Span> spans) {
    std::sort(spans.begin(), spans.end(),
              [](const Span& a, const Span& b) { return a.start != b.start ? a.start < b.start : a.end < b.end; });
    std::vector<Span> out;
    for (const auto& s : spans) {
        if (!out.empty() && s.start <= out.back().end)
            out.back().end = std::max(out.back().end, s.end);
        else
            out.push_back(s);
    }
    return out;
}

std::size_t code_point_length(std::string_view text) {
    return static_cast<std::size_t>(
        std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

// -- service ------------------------------------------------------------------

namespace {

std::string utc_now() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

HttpResult reply(int status, const json& body) { return {status, body.dump()}; }
HttpResult error(int status, const std::string& message) { return reply(status, json{{"error", message}}); }

json spans_json(const std::vector<Span>& spans) {
    json out = json::array();
    for (const auto& s : spans) out.push_back(json::array({s.start, s.end}));
    return out;
}

json t1_record(const T1Judgment& j) {
    return {{"kind", "t1"},           {"task_id", j.task_id},         {"annotator_id", j.annotator_id},
            {"question_idx", j.question_idx}, {"answerable", j.answerable}, {"spans", spans_json(j.spans)},
            {"submitted_at", j.submitted_at}};
}

json t2_record(const T2Judgment& j) {
    return {{"kind", "t2"},
            {"task_id", j.task_id},
            {"annotator_id", j.annotator_id},
            {"question_idx", j.question_idx},
            {"rating", j.rating},
            {"rubric_version", j.rubric_version},
            {"submitted_at", j.submitted_at}};
}

std::vector<Span> spans_from(const json& j) {
    std::vector<Span> out;
    if (j.is_null()) return out;
    if (!j.is_array()) throw UsageError("spans must be an array");
    for (const auto& s : j) {
        long long start = 0, end = 0;
        if (s.is_array() && s.size() == 2) {
            start = s[0].get<long long>();
            end = s[1].get<long long>();
        } else if (s.is_object()) {
            start = s.at("start").get<long long>();
            end = s.at("end").get<long long>();
        } else {
            throw UsageError("a span is [start, end] or {\"start\", \"end\"}");
        }
        if (start < 0 || end < 0) throw UsageError("span offsets must be non-negative");
        out.push_back({static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
    }
    return out;
}

json question_list(const std::vector<TaskQuestion>& qs) {
    json out = json::array();
    for (const auto& q : qs) out.push_back({{"question_idx", q.question_idx}, {"text", q.text}});
    return out;
}

json items_of(const json& body, const char* key) {
    if (body.is_array()) return body;
    if (body.is_object() && body.contains(key)) return body.at(key);
    if (body.is_object()) return json::array({body});
    throw UsageError("body must be a judgment object or a list of judgments");
}

double fraction_at(const std::vector<int>& ratings, int eta) {
    auto hit = std::count_if(ratings.begin(), ratings.end(), [eta](int r) { return r >= eta; });
    return static_cast<double>(hit) / static_cast<double>(ratings.size());
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

AnnotationService::AnnotationService(TaskBundle bundle, std::map<std::string, std::string> annotators,
                                     std::optional<std::filesystem::path> journal, int eta, Clock clock)
    : bundle_(std::move(bundle)),
      annotators_(std::move(annotators)),
      journal_path_(std::move(journal)),
      eta_(eta),
      clock_(clock ? std::move(clock) : Clock(utc_now)) {
    if (!journal_path_) return;
    if (std::filesystem::exists(*journal_path_)) {
        detail::for_each_record(*journal_path_, [&](const json& rec, std::size_t) {
            ++journal_records_;
            auto kind = rec.at("kind").get<std::string>();
            Key key{rec.at("annotator_id").get<std::string>(), rec.at("task_id").get<std::string>(),
                    rec.at("question_idx").get<std::size_t>()};
            if (kind == "t1") {
                t1_[key] = {std::get<1>(key), std::get<0>(key), std::get<2>(key), rec.at("answerable").get<bool>(),
                            spans_from(rec.at("spans")), rec.value("submitted_at", std::string{})};
            } else if (kind == "t2") {
                t2_[key] = {std::get<1>(key), std::get<0>(key), std::get<2>(key), rec.at("rating").get<int>(),
                            rec.value("rubric_version", std::string(kRubricVersion)),
                            rec.value("submitted_at", std::string{})};
            } else {
                throw ParseError("journal record of unknown kind " + kind);
            }
        });
    }
    journal_.open(*journal_path_, std::ios::binary | std::ios::app);
    if (!journal_) throw Error("cannot open journal " + journal_path_->string());
}

bool AnnotationService::authorized(std::string_view annotator, std::string_view token) const {
    auto it = annotators_.find(std::string(annotator));
    if (it == annotators_.end()) return false;
    return it->second.empty() || it->second == token;
}

void AnnotationService::append(const std::string& line) {
    ++journal_records_;
    if (journal_.is_open()) {
        journal_ << line << '\n';
        journal_.flush();
    }
}

bool AnnotationService::t1_done(const std::string& annotator, const T1Task& task) const {
    return std::all_of(task.questions.begin(), task.questions.end(), [&](const TaskQuestion& q) {
        return t1_.contains({annotator, task.task_id, q.question_idx});
    });
}

bool AnnotationService::t2_done(const std::string& annotator, const T2Task& task) const {
    return std::all_of(task.questions.begin(), task.questions.end(), [&](const TaskQuestion& q) {
        return t2_.contains({annotator, task.task_id, q.question_idx});
    });
}

HttpResult AnnotationService::next_task(std::string_view annotator, std::string_view kind,
                                        std::string_view token) const {
    if (!authorized(annotator, token)) return error(401, "unknown annotator");
    std::shared_lock lock(mutex_);
    const std::string who(annotator);
    if (kind == "t1") {
        for (const auto& task : bundle_.t1) {
            if (t1_done(who, task)) continue;
            return reply(200, {{"task_id", task.task_id},
                               {"kind", "t1"},
                               {"topic_id", task.topic_id},
                               {"report", task.report},
                               {"report_hash", content_key(task.report, "")},
                               {"report_length", code_point_length(task.report)},
                               {"questions", question_list(task.questions)}});
        }
        return error(404, "no t1 tasks remain");
    }
    if (kind == "t2") {
        for (const auto& task : bundle_.t2) {
            if (t2_done(who, task)) continue;
            return reply(200, {{"task_id", task.task_id},
                               {"kind", "t2"},
                               {"topic_id", task.topic_id},
                               {"passage_id", task.passage_id},
                               {"passage", task.passage},
                               {"rubric_version", kRubricVersion},
                               {"questions", question_list(task.questions)}});
        }
        return error(404, "no t2 tasks remain");
    }
    return error(422, "kind must be t1 or t2");
}

HttpResult AnnotationService::submit_t1(std::string_view task_id, std::string_view body, std::string_view token) {
    auto task_it = std::find_if(bundle_.t1.begin(), bundle_.t1.end(),
                                [&](const T1Task& t) { return t.task_id == task_id; });
    if (task_it == bundle_.t1.end()) return error(404, "unknown t1 task");
    const T1Task& task = *task_it;

    std::vector<T1Judgment> judgments;
    try {
        for (const auto& item : items_of(json::parse(body), "judgments")) {
            if (item.contains("task_id") && item["task_id"].get<std::string>() != task_id)
                return error(422, "judgment task_id does not match the URL");
            T1Judgment j;
            j.task_id = task.task_id;
            j.annotator_id = item.at("annotator_id").get<std::string>();
            j.question_idx = item.at("question_idx").get<std::size_t>();
            j.answerable = item.at("answerable").get<bool>();
            j.spans = spans_from(item.value("spans", json::array()));
            judgments.push_back(std::move(j));
        }
    } catch (const json::parse_error&) {
        return error(400, "body is not valid JSON");
    } catch (const std::exception& e) {
        return error(422, e.what());
    }
    if (judgments.empty()) return error(409, "submission holds no judgments");

    const auto& annotator = judgments.front().annotator_id;
    for (const auto& j : judgments) {
        if (j.annotator_id != annotator) return error(422, "all judgments must come from one annotator");
    }
    if (!authorized(annotator, token)) return error(401, "unknown annotator");

    std::set<std::size_t> expected, got;
    for (const auto& q : task.questions) expected.insert(q.question_idx);
    for (const auto& j : judgments)
        if (!got.insert(j.question_idx).second) return error(409, "question submitted twice");
    if (got != expected) return error(409, "judgments must cover exactly the task's questions");

    const auto length = code_point_length(task.report);
    for (auto& j : judgments) {
        for (const auto& s : j.spans) {
            if (s.start >= s.end || s.end > length)
                return error(422, "span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                      ") out of bounds for question " + std::to_string(j.question_idx));
        }
        j.spans = normalize_spans(std::move(j.spans));
        if (j.answerable && j.spans.empty())
            return error(422, "answerable question " + std::to_string(j.question_idx) + " needs a highlighted span");
    }

    std::unique_lock lock(mutex_);
    auto stamp = clock_();
    for (auto& j : judgments) {
        j.submitted_at = stamp;
        append(t1_record(j).dump());
        t1_[{j.annotator_id, j.task_id, j.question_idx}] = j;
    }
    return reply(200, {{"task_id", task.task_id}, {"stored", judgments.size()}, {"submitted_at", stamp}});
}

HttpResult AnnotationService::submit_t2(std::string_view task_id, std::string_view body, std::string_view token) {
    auto task_it = std::find_if(bundle_.t2.begin(), bundle_.t2.end(),
                                [&](const T2Task& t) { return t.task_id == task_id; });
    if (task_it == bundle_.t2.end()) return error(404, "unknown t2 task");
    const T2Task& task = *task_it;

    std::vector<T2Judgment> judgments;
    try {
        for (const auto& item : items_of(json::parse(body), "judgments")) {
            if (item.contains("task_id") && item["task_id"].get<std::string>() != task_id)
                return error(422, "judgment task_id does not match the URL");
            T2Judgment j;
            j.task_id = task.task_id;
            j.annotator_id = item.at("annotator_id").get<std::string>();
            j.question_idx = item.at("question_idx").get<std::size_t>();
            const auto& r = item.at("rating");
            if (!r.is_number_integer()) return error(422, "rating must be an integer in 0..5");
            j.rating = r.get<int>();
            judgments.push_back(std::move(j));
        }
    } catch (const json::parse_error&) {
        return error(400, "body is not valid JSON");
    } catch (const std::exception& e) {
        return error(422, e.what());
    }
    if (judgments.empty()) return error(409, "submission holds no judgments");
    for (const auto& j : judgments) {
        if (!authorized(j.annotator_id, token)) return error(401, "unknown annotator");
        if (std::none_of(task.questions.begin(), task.questions.end(),
                         [&](const TaskQuestion& q) { return q.question_idx == j.question_idx; }))
            return error(409, "question " + std::to_string(j.question_idx) + " is not part of the task");
        if (j.rating < 0 || j.rating > 5) return error(422, "rating must be an integer in 0..5");
    }

    std::unique_lock lock(mutex_);
    auto stamp = clock_();
    for (auto& j : judgments) {
        j.submitted_at = stamp;
        append(t2_record(j).dump());
        t2_[{j.annotator_id, j.task_id, j.question_idx}] = j;
    }
    return reply(200, {{"task_id", task.task_id},
                       {"stored", judgments.size()},
                       {"rubric_version", kRubricVersion},
                       {"submitted_at", stamp}});
}

HttpResult AnnotationService::human_coverage() const {
    std::shared_lock lock(mutex_);
    json reports = json::array();
    // annotator -> (human coverage, llm coverage) per completed report
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_annotator;
    // (task, question) -> annotator -> label
    std::map<std::pair<std::string, std::size_t>, std::map<std::string, int>> items;

    for (const auto& task : bundle_.t1) {
        json covs = json::object();
        double sum = 0.0;
        std::size_t n = 0;
        std::optional<double> llm;
        if (!task.llm_ratings.empty()) llm = fraction_at(task.llm_ratings, eta_);
        for (const auto& [annotator, _] : annotators_) {
            if (!t1_done(annotator, task)) continue;
            std::size_t yes = 0;
            for (const auto& q : task.questions) {
                bool a = t1_.at({annotator, task.task_id, q.question_idx}).answerable;
                yes += a ? 1 : 0;
                items[{task.task_id, q.question_idx}][annotator] = a ? 1 : 0;
            }
            double cov = static_cast<double>(yes) / static_cast<double>(task.questions.size());
            covs[annotator] = cov;
            sum += cov;
            ++n;
            if (llm) {
                per_annotator[annotator].first.push_back(cov);
                per_annotator[annotator].second.push_back(*llm);
            }
        }
        if (n == 0) continue;
        json row{{"task_id", task.task_id},
                 {"topic_id", task.topic_id},
                 {"context_source", task.context_source},
                 {"annotators", std::move(covs)},
                 {"mean", sum / static_cast<double>(n)}};
        if (llm) row["llm_coverage"] = *llm;
        reports.push_back(std::move(row));
    }

    json out = json::object();
    if (!reports.empty()) out["reports"] = std::move(reports);

    std::size_t raters = 0;
    for (const auto& [_, labels] : items) raters = std::max(raters, labels.size());
    if (raters >= 2) {
        std::vector<std::vector<int>> matrix;
        for (const auto& [_, labels] : items) {
            if (labels.size() != raters) continue;
            std::vector<int> row;
            for (const auto& [__, l] : labels) row.push_back(l);
            matrix.push_back(std::move(row));
        }
        if (matrix.size() >= 2)
            out["fleiss_kappa"] = {{"value", fleiss_kappa(matrix, 2)}, {"items", matrix.size()}, {"raters", raters}};
    }

    json corr = json::array();
    for (const auto& [annotator, xy] : per_annotator) {
        if (xy.first.size() < 2) continue;
        auto guarded = [](auto fn) -> std::optional<double> {
            try {
                return fn();
            } catch (const UndefinedMetric&) {
                return std::nullopt;
            }
        };
        corr.push_back({{"annotator", annotator},
                        {"n", xy.first.size()},
                        {"spearman", opt(guarded([&] { return spearman_rho(xy.first, xy.second); }))},
                        {"pearson", opt(guarded([&] { return pearson_r(xy.first, xy.second); }))}});
    }
    if (!corr.empty()) out["llm_correlation"] = std::move(corr);
    return reply(200, out);
}

HttpResult AnnotationService::judge_alignment() const {
    std::shared_lock lock(mutex_);
    std::vector<int> llm, human;
    for (const auto& [key, j] : t2_) {
        auto it = std::find_if(bundle_.t2.begin(), bundle_.t2.end(),
                               [&](const T2Task& t) { return t.task_id == j.task_id; });
        if (it == bundle_.t2.end()) continue;
        for (std::size_t q = 0; q < it->questions.size(); ++q) {
            if (it->questions[q].question_idx != j.question_idx || q >= it->llm_ratings.size()) continue;
            llm.push_back(it->llm_ratings[q]);
            human.push_back(j.rating);
        }
    }
    json out{{"n", llm.size()}, {"eta", eta_}};
    if (llm.empty()) return reply(200, out);
    auto a = judge_vs_human(llm, human, eta_);
    auto cls = [](const ClassScores& c) {
        return json{{"tp", c.true_positive}, {"fp", c.false_positive}, {"fn", c.false_negative},
                    {"precision", opt(c.precision)}, {"recall", opt(c.recall)}};
    };
    out["answerable"] = cls(a.answerable);
    out["unanswerable"] = cls(a.unanswerable);
    return reply(200, out);
}

std::size_t AnnotationService::journal_size() const {
    std::shared_lock lock(mutex_);
    return journal_records_;
}

std::vector<T1Judgment> AnnotationService::t1_judgments() const {
    std::shared_lock lock(mutex_);
    std::vector<T1Judgment> out;
    for (const auto& [_, j] : t1_) out.push_back(j);
    return out;
}

std::vector<T2Judgment> AnnotationService::t2_judgments() const {
    std::shared_lock lock(mutex_);
    std::vector<T2Judgment> out;
    for (const auto& [_, j] : t2_) out.push_back(j);
    return out;
}

std::map<std::string, std::string> load_annotators(const std::filesystem::path& path) {
    auto doc = json::parse(detail::read_file(path));
    const json& list = doc.is_object() ? doc.at("annotators") : doc;
    std::map<std::string, std::string> out;
    for (const auto& a : list) {
        if (a.is_string())
            out.emplace(a.get<std::string>(), "");
        else
            out.emplace(a.at("id").get<std::string>(), a.value("token", std::string{}));
    }
    if (out.empty()) throw UsageError("annotator file lists no annotators");
    return out;
}

}  // namespace crux
