#include "cyclevqa/synthetic.hpp"

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cyclevqa/rng.hpp"

namespace cyclevqa {

namespace {

const std::array<std::string, 4> kColors = {"red", "green", "blue", "yellow"};
const std::array<std::string, 3> kShapes = {"square", "circle", "triangle"};

struct Cell {
    bool occupied = false;
    int color = 0;
    int shape = 0;
};

using Scene = std::array<Cell, 9>;  // row-major 3x3

Scene sample_scene(rng::Engine& g) {
    Scene scene;
    bool any = false;
    for (auto& cell : scene) {
        if (rng::uniform01(g) < 0.55) {
            cell.occupied = true;
            cell.color = static_cast<int>(rng::uniform_int(g, kColors.size()));
            cell.shape = static_cast<int>(rng::uniform_int(g, kShapes.size()));
            any = true;
        }
    }
    if (!any) {  // an all-empty grid answers nothing interesting
        auto& cell = scene[static_cast<std::size_t>(rng::uniform_int(g, 9))];
        cell.occupied = true;
        cell.color = static_cast<int>(rng::uniform_int(g, kColors.size()));
        cell.shape = static_cast<int>(rng::uniform_int(g, kShapes.size()));
    }
    return scene;
}

Eigen::MatrixXd render_scene(const Scene& scene) {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(kSyntheticRegions, kSyntheticFeatureDim);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const int region = r * 3 + c;
            const Cell& cell = scene[static_cast<std::size_t>(region)];
            int col = 0;
            f(region, col) = cell.occupied ? 1.0 : 0.0;
            col += 1;
            if (cell.occupied) f(region, col + cell.color) = 1.0;
            col += 4;
            if (cell.occupied) f(region, col + cell.shape) = 1.0;
            col += 3;
            f(region, col + r) = 1.0;
            col += 3;
            f(region, col + c) = 1.0;
            col += 3;
            f(region, col) = r / 2.0;
            f(region, col + 1) = c / 2.0;
        }
    }
    return f;
}

int count_shape(const Scene& scene, int shape) {
    int n = 0;
    for (const auto& cell : scene)
        if (cell.occupied && cell.shape == shape) ++n;
    return n;
}

int count_color(const Scene& scene, int color) {
    int n = 0;
    for (const auto& cell : scene)
        if (cell.occupied && cell.color == color) ++n;
    return n;
}

bool has_pair(const Scene& scene, int color, int shape) {
    for (const auto& cell : scene)
        if (cell.occupied && cell.color == color && cell.shape == shape) return true;
    return false;
}

enum class Family { Count, Color, Shape, Exist };

// Every token in templates 1..4 also occurs in some template 0, so training
// on originals alone leaves no rephrasing token out of vocabulary.
std::string render_template(Family family, int tpl, const std::string& shape, const std::string& color) {
    switch (family) {
        case Family::Count:
            switch (tpl) {
                case 0: return "how many " + shape + " are there";
                case 1: return "there are how many " + shape;
                case 2: return "how many " + shape + " are in the image";
                case 3: return "how many " + shape + " can you see";
                default: return "how many " + shape + " does the image have";
            }
        case Family::Color:
            switch (tpl) {
                case 0: return "what is the color of the " + shape + " in the image";
                case 1: return "what color is the " + shape;
                case 2: return "the " + shape + " is what color";
                case 3: return "which color does the " + shape + " have";
                default: return "what is the color of the " + shape;
            }
        case Family::Shape:
            switch (tpl) {
                case 0: return "which shape does the " + color + " object have";
                case 1: return "what shape is the " + color + " object";
                case 2: return "the " + color + " object is what shape";
                case 3: return "what is the shape of the " + color + " object";
                default: return "which shape is the " + color + " object";
            }
        case Family::Exist:
        default:
            switch (tpl) {
                case 0: return "can you see a " + color + " " + shape;
                case 1: return "is there a " + color + " " + shape;
                case 2: return "is there a " + color + " " + shape + " in the image";
                case 3: return "does the image have a " + color + " " + shape;
                default: return "is a " + color + " " + shape + " in the image";
            }
    }
}

struct QuestionPlan {
    Family family;
    int shape = -1;
    int color = -1;
    std::string answer;
};

// A plan is valid when the scene determines a unique answer for it.
std::optional<QuestionPlan> plan_question(const Scene& scene, Family family, rng::Engine& g,
                                          std::set<std::pair<int, int>>& used) {
    const int fam = static_cast<int>(family);
    switch (family) {
        case Family::Count: {
            std::vector<int> candidates;
            for (int s = 0; s < static_cast<int>(kShapes.size()); ++s)
                if (!used.count({fam, s})) candidates.push_back(s);
            if (candidates.empty()) return std::nullopt;
            const int s = candidates[rng::uniform_int(g, candidates.size())];
            used.insert({fam, s});
            return QuestionPlan{family, s, -1, std::to_string(count_shape(scene, s))};
        }
        case Family::Color: {
            std::vector<int> candidates;
            for (int s = 0; s < static_cast<int>(kShapes.size()); ++s)
                if (count_shape(scene, s) == 1 && !used.count({fam, s})) candidates.push_back(s);
            if (candidates.empty()) return std::nullopt;
            const int s = candidates[rng::uniform_int(g, candidates.size())];
            used.insert({fam, s});
            for (const auto& cell : scene)
                if (cell.occupied && cell.shape == s)
                    return QuestionPlan{family, s, -1, kColors[static_cast<std::size_t>(cell.color)]};
            return std::nullopt;
        }
        case Family::Shape: {
            std::vector<int> candidates;
            for (int c = 0; c < static_cast<int>(kColors.size()); ++c)
                if (count_color(scene, c) == 1 && !used.count({fam, c})) candidates.push_back(c);
            if (candidates.empty()) return std::nullopt;
            const int c = candidates[rng::uniform_int(g, candidates.size())];
            used.insert({fam, c});
            for (const auto& cell : scene)
                if (cell.occupied && cell.color == c)
                    return QuestionPlan{family, -1, c, kShapes[static_cast<std::size_t>(cell.shape)]};
            return std::nullopt;
        }
        case Family::Exist:
        default: {
            std::vector<std::pair<int, int>> candidates;
            for (int c = 0; c < static_cast<int>(kColors.size()); ++c)
                for (int s = 0; s < static_cast<int>(kShapes.size()); ++s)
                    if (!used.count({fam, c * 16 + s})) candidates.push_back({c, s});
            if (candidates.empty()) return std::nullopt;
            // bias toward present pairs so yes/no stays balanced
            std::vector<std::pair<int, int>> present;
            for (auto& cand : candidates)
                if (has_pair(scene, cand.first, cand.second)) present.push_back(cand);
            std::pair<int, int> pick;
            if (!present.empty() && rng::uniform01(g) < 0.5) {
                pick = present[rng::uniform_int(g, present.size())];
            } else {
                pick = candidates[rng::uniform_int(g, candidates.size())];
            }
            used.insert({fam, pick.first * 16 + pick.second});
            return QuestionPlan{family, pick.second, pick.first,
                                has_pair(scene, pick.first, pick.second) ? "yes" : "no"};
        }
    }
}

}  // namespace

std::pair<DatasetSplit, FeatureStore> generate_synthetic_world(std::uint64_t seed, int n_images,
                                                               int n_questions_per_image,
                                                               int n_rephrasings) {
    if (n_images < 1) throw ArgumentError("n_images must be >= 1");
    if (n_questions_per_image < 1) throw ArgumentError("n_questions_per_image must be >= 1");
    if (n_rephrasings < 1) throw ArgumentError("n_rephrasings must be >= 1");
    if (n_rephrasings > kSyntheticMaxRephrasings)
        throw ArgumentError("n_rephrasings must be <= " + std::to_string(kSyntheticMaxRephrasings) +
                            " (template bank size)");

    DatasetSplit split;
    split.name = "synthetic";
    FeatureStore store(kSyntheticRegions, kSyntheticFeatureDim);
    std::int64_t next_group_id = 1;

    for (int img = 0; img < n_images; ++img) {
        rng::Engine g = rng::make_engine(rng::derive_seed(seed, static_cast<std::uint64_t>(img)));
        const Scene scene = sample_scene(g);
        const std::uint64_t image_id = static_cast<std::uint64_t>(img + 1);
        store.insert(RegionFeatures{image_id, render_scene(scene)});

        std::set<std::pair<int, int>> used;
        for (int q = 0; q < n_questions_per_image; ++q) {
            std::optional<QuestionPlan> plan;
            for (int probe = 0; probe < 4 && !plan; ++probe) {
                const auto family = static_cast<Family>((img + q + probe) % 4);
                plan = plan_question(scene, family, g, used);
            }
            if (!plan) break;  // tiny scene ran out of distinct questions

            const std::string shape = plan->shape >= 0 ? kShapes[static_cast<std::size_t>(plan->shape)] : "";
            const std::string color = plan->color >= 0 ? kColors[static_cast<std::size_t>(plan->color)] : "";

            RephrasingGroup group;
            group.group_id = next_group_id++;
            group.image_id = image_id;
            const std::int64_t qid_base =
                (static_cast<std::int64_t>(img) * n_questions_per_image + q + 1) * 10;
            for (int tpl = 0; tpl <= n_rephrasings; ++tpl) {
                QAInstance inst;
                inst.question_id = qid_base + tpl;
                inst.image_id = image_id;
                inst.raw_question = render_template(plan->family, tpl, shape, color);
                inst.labels = make_answer_labels({plan->answer});
                split.instances.push_back(std::move(inst));
                if (tpl == 0) {
                    group.original = qid_base;
                } else {
                    group.rephrasings.push_back(qid_base + tpl);
                }
            }
            split.groups.push_back(std::move(group));
        }
    }

    // token ids are resolved by the caller's vocabulary; keep raw text only
    split.rebuild_index();
    return {std::move(split), std::move(store)};
}

DatasetSplit originals_only(const DatasetSplit& split) {
    DatasetSplit out;
    out.name = split.name;
    std::set<std::int64_t> originals;
    for (const auto& g : split.groups) originals.insert(g.original);
    for (const auto& inst : split.instances) {
        if (originals.empty() || originals.count(inst.question_id)) out.instances.push_back(inst);
    }
    out.rebuild_index();
    return out;
}

}  // namespace cyclevqa
