#pragma once

#include <string>
#include <variant>

#include "stressmon/model/forest.hpp"
#include "stressmon/model/knn.hpp"

namespace stressmon::model {

enum class ModelKind { Knn, RandomForest };

struct ClassifierSpec {
    ModelKind kind = ModelKind::RandomForest;
    std::size_t knn_k = 5;
    std::size_t n_trees = 100;
    std::size_t max_features = 3;
    std::size_t min_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 0;

    ForestParams forest() const { return {n_trees, max_features, min_leaf, bootstrap, seed}; }
};

inline std::string to_string(ModelKind k) { return k == ModelKind::Knn ? "knn" : "rf"; }

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "knn") return ModelKind::Knn;
    if (s == "rf" || s == "random_forest") return ModelKind::RandomForest;
    fail(ErrorKind::InvalidArgument, "model_kind", "unknown model '" + s + "' (expected knn or rf)");
}

class Model {
public:
    int predict(const FeatureArray& x) const {
        return std::visit([&](const auto& m) { return m.predict(x); }, impl_);
    }

    std::vector<int> predict(const std::vector<FeatureArray>& xs) const {
        std::vector<int> out;
        out.reserve(xs.size());
        for (const auto& x : xs) out.push_back(predict(x));
        return out;
    }

    std::string warning() const {
        if (const auto* k = std::get_if<KnnModel>(&impl_)) return k->warning();
        return {};
    }

private:
    explicit Model(std::variant<KnnModel, RandomForest> m) : impl_(std::move(m)) {}
    friend Model train(const ClassifierSpec&, const BinaryDataset&);

    std::variant<KnnModel, RandomForest> impl_;
};

inline Model train(const ClassifierSpec& spec, const BinaryDataset& rows) {
    if (spec.kind == ModelKind::Knn) return Model(KnnModel(rows, spec.knn_k));
    return Model(RandomForest(rows, spec.forest()));
}

} // namespace stressmon::model
