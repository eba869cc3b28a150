/* Build: cargo build -p grama-ffi --release
 *        cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *           target/release/libgrama_ffi.a -lm -lpthread -ldl -o smoke */
#include <stdio.h>
#include "grama.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        GramaStatus st_ = (call);                                          \
        if (st_ != GRAMA_STATUS_OK) {                                      \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)st_,       \
                    grama_last_error());                                   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    const double phi[] = {0.5, 0.3};
    GramaStability report;
    CHECK(grama_stability_report(phi, 2, &report));
    printf("grama %s: spectral radius %.6f, stable %d\n", grama_version(),
           report.spectral_radius, report.stable);

    const size_t edges[] = {0, 1, 1, 2, 2, 3};
    const double features[] = {1, 0, 0, 0, 0, 0, 0, 0};
    GramaGraph *graph = NULL;
    CHECK(grama_graph_new(4, edges, 3, features, 2, &graph));

    GramaModelOptions options = grama_model_options_default(2, 1);
    options.activation = GRAMA_ACTIVATION_GELU;
    GramaModel *model = NULL;
    CHECK(grama_model_new(&options, 0, &model));

    size_t len = 0;
    CHECK(grama_model_output_len(model, graph, &len));
    double out[4];
    CHECK(grama_model_predict(model, graph, out, len));
    for (size_t i = 0; i < len; i++) printf("node %zu: %+.6f\n", i, out[i]);

    grama_model_free(model);
    grama_graph_free(graph);
    return 0;
}
