// Scores a few completions against one ground truth and prints the breakdown.
#include <cstdio>

#include "groundkit.hpp"

int main() {
    using namespace groundkit;
    const GroundTruth gt{{100, 100, 100, 100}, {"cup"}, {"cup", "mug"}, 640, 480};
    const StepContext ctx{0, 100, WeightSchedule::stage2()};

    const char* completions[] = {
        "<think>the drink goes in a mug</think><answer>{\"target_object\":\"mug\",\"bbox\":[105,100,95,100]}</answer>",
        "<answer>{\"target_object\":\"cup\",\"bbox\":[100,100,100,100]}</answer>",
        "<answer>{\"object\":\"bowl\",\"box\":[300,300,50,50]}</answer>",
        "no answer at all",
    };
    for (const char* c : completions) {
        const auto b = score_completion(c, gt, ctx);
        std::printf("total %+.4f  r_iou %+.4f  r_cat %.4f  r_fmt %+.0f  r_struct %.2f  iou %.3f  %s\n", b.total, b.r_iou,
                    b.r_cat, b.r_fmt, b.r_struct, b.iou, std::string(to_string(b.tier)).c_str());
    }
}
