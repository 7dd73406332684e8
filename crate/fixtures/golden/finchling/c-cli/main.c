/*
 * finchling 1.0.0 command-line driver.
 * Generated from the device's RDIS description. Do not edit.
 *
 * usage: finchling [host [port]]
 * With RDIS_DRY_RUN set, frames are printed as hex instead of sent.
 */
#define _POSIX_C_SOURCE 200809L

#include <errno.h>
#include <math.h>
#include <netdb.h>
#include <signal.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/select.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <time.h>
#include <unistd.h>

#if defined(__GNUC__)
#define RDIS_MAYBE_UNUSED __attribute__((unused))
#else
#define RDIS_MAYBE_UNUSED
#endif

#define RDIS_DEFAULT_HOST "127.0.0.1"
#define RDIS_DEFAULT_PORT "7070"
#define RDIS_REPLY_TIMEOUT_MS 500
#define RDIS_FRAME_LEN 8

#define RDIS_OK 0
#define RDIS_EIO (-1)
#define RDIS_ETIMEOUT (-2)
#define RDIS_EPROTO (-3)
#define RDIS_ERANGE (-4)
#define RDIS_EEVAL (-5)
#define RDIS_EUSAGE (-6)

static const double K_max_wheel_mps = 0.5;
static const double K_ticks_per_meter = 1000.0;
static const double K_wheel_track_m = 0.1;
static double S_enc_left = 0.0;
static double S_enc_right = 0.0;

static int rdis_fd = -1;
static int rdis_dry_run = 0;
static int rdis_eval_error = 0;
static unsigned char rdis_rx[1024];
static size_t rdis_rx_len = 0;

/* ---- transport shim ---- */

static long long rdis_now_ms(void)
{
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (long long)ts.tv_sec * 1000 + ts.tv_nsec / 1000000;
}

static int rdis_connect(const char *host, const char *port)
{
    struct addrinfo hints, *res, *ai;
    int fd = -1;
    memset(&hints, 0, sizeof hints);
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (getaddrinfo(host, port, &hints, &res) != 0)
        return RDIS_EIO;
    for (ai = res; ai != NULL; ai = ai->ai_next) {
        fd = socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0)
            continue;
        if (connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
            break;
        close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0)
        return RDIS_EIO;
    rdis_fd = fd;
    return RDIS_OK;
}

static RDIS_MAYBE_UNUSED int rdis_send(const unsigned char *buf, size_t len)
{
    size_t off = 0;
    if (rdis_dry_run) {
        size_t i;
        printf("tx");
        for (i = 0; i < len; i++)
            printf(" %02X", buf[i]);
        printf("\n");
        return RDIS_OK;
    }
    while (off < len) {
        ssize_t n = send(rdis_fd, buf + off, len - off, 0);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            return RDIS_EIO;
        }
        off += (size_t)n;
    }
    return RDIS_OK;
}

/* Length of the first complete frame in the receive buffer, or 0. */
static size_t rdis_frame_ready(void)
{
#ifdef RDIS_FRAME_LEN
    return rdis_rx_len >= RDIS_FRAME_LEN ? RDIS_FRAME_LEN : 0;
#else
    size_t i;
    for (i = 0; i < rdis_rx_len; i++)
        if (rdis_rx[i] == (unsigned char)RDIS_TERMINATOR)
            return i + 1;
    return 0;
#endif
}

static void rdis_consume(size_t len)
{
    memmove(rdis_rx, rdis_rx + len, rdis_rx_len - len);
    rdis_rx_len -= len;
}

static int rdis_fill(void)
{
    ssize_t n;
    if (rdis_rx_len == sizeof rdis_rx)
        rdis_rx_len = 0;
    n = recv(rdis_fd, rdis_rx + rdis_rx_len, sizeof rdis_rx - rdis_rx_len, 0);
    if (n <= 0)
        return RDIS_EIO;
    rdis_rx_len += (size_t)n;
    return RDIS_OK;
}

/* Reads whatever arrived outside a request and drops complete frames. */
static int rdis_drain(void)
{
    size_t len;
    if (rdis_fill() != RDIS_OK)
        return RDIS_EIO;
    while ((len = rdis_frame_ready()) > 0)
        rdis_consume(len);
    return RDIS_OK;
}

/* Waits for the next frame starting with `tag`. Other frames are dropped. */
static RDIS_MAYBE_UNUSED int rdis_await(unsigned char tag, unsigned char *out, size_t cap, size_t *out_len)
{
    long long deadline = rdis_now_ms() + RDIS_REPLY_TIMEOUT_MS;
    if (rdis_dry_run)
        return RDIS_ETIMEOUT;
    for (;;) {
        size_t len = rdis_frame_ready();
        fd_set rfds;
        struct timeval tv;
        long long left;
        if (len > 0) {
            int match = rdis_rx[0] == tag && len <= cap;
            if (match) {
                memcpy(out, rdis_rx, len);
                *out_len = len;
            }
            rdis_consume(len);
            if (match)
                return RDIS_OK;
            continue;
        }
        left = deadline - rdis_now_ms();
        if (left <= 0)
            return RDIS_ETIMEOUT;
        FD_ZERO(&rfds);
        FD_SET(rdis_fd, &rfds);
        tv.tv_sec = (time_t)(left / 1000);
        tv.tv_usec = (suseconds_t)((left % 1000) * 1000);
        if (select(rdis_fd + 1, &rfds, NULL, NULL, &tv) < 0) {
            if (errno == EINTR)
                continue;
            return RDIS_EIO;
        }
        if (FD_ISSET(rdis_fd, &rfds) && rdis_fill() != RDIS_OK)
            return RDIS_EIO;
    }
}

/* ---- value helpers ---- */

static RDIS_MAYBE_UNUSED double rdis_div(double a, double b)
{
    if (b == 0.0) {
        rdis_eval_error = 1;
        return 0.0;
    }
    return a / b;
}

static RDIS_MAYBE_UNUSED double rdis_clamp(double x, double lo, double hi)
{
    if (lo > hi) {
        rdis_eval_error = 1;
        return x;
    }
    return x < lo ? lo : (x > hi ? hi : x);
}

static RDIS_MAYBE_UNUSED unsigned char rdis_byte(long v, int shift)
{
    return (unsigned char)(((unsigned long)v >> shift) & 0xFFu);
}

static RDIS_MAYBE_UNUSED long rdis_get_u8(const unsigned char *f, int off)
{
    return (long)f[off];
}

static RDIS_MAYBE_UNUSED long rdis_get_i8(const unsigned char *f, int off)
{
    return f[off] < 128 ? (long)f[off] : (long)f[off] - 256;
}

static RDIS_MAYBE_UNUSED long rdis_get_u16be(const unsigned char *f, int off)
{
    return ((long)f[off] << 8) | (long)f[off + 1];
}

static RDIS_MAYBE_UNUSED long rdis_get_i16be(const unsigned char *f, int off)
{
    long v = rdis_get_u16be(f, off);
    return v < 32768 ? v : v - 65536;
}

/* ---- primitives ---- */

/* setMotor: 8-byte positional frame, command 0x4D */
static int setMotor(int left, int right)
{
    unsigned char frame[8];
    if (left < -128 || left > 127)
        return RDIS_ERANGE;
    if (right < -128 || right > 127)
        return RDIS_ERANGE;
    memset(frame, 0, sizeof frame);
    frame[0] = 0x4D;
    frame[1] = rdis_byte(left, 0);
    frame[2] = rdis_byte(right, 0);
    if (rdis_send(frame, sizeof frame) != RDIS_OK)
        return RDIS_EIO;
    return RDIS_OK;
}

/* stopMotors: 8-byte positional frame, command 0x4D */
static int stopMotors(void)
{
    unsigned char frame[8];
    memset(frame, 0, sizeof frame);
    frame[0] = 0x4D;
    if (rdis_send(frame, sizeof frame) != RDIS_OK)
        return RDIS_EIO;
    return RDIS_OK;
}

/* keepAlive: 8-byte positional frame, command 0x4B */
static int keepAlive(void)
{
    unsigned char frame[8];
    memset(frame, 0, sizeof frame);
    frame[0] = 0x4B;
    if (rdis_send(frame, sizeof frame) != RDIS_OK)
        return RDIS_EIO;
    return RDIS_OK;
}

static struct {
    long left;
    long right;
} R_getEncoders;

/* getEncoders: 8-byte positional frame, command 0x45 */
static int getEncoders(void)
{
    unsigned char frame[8];
    unsigned char reply[8];
    size_t reply_len = 0;
    int rc;
    memset(frame, 0, sizeof frame);
    frame[0] = 0x45;
    if (rdis_send(frame, sizeof frame) != RDIS_OK)
        return RDIS_EIO;
    rc = rdis_await(0x65, reply, sizeof reply, &reply_len);
    if (rc != RDIS_OK)
        return rc;
    if (reply_len != 8)
        return RDIS_EPROTO;
    R_getEncoders.left = rdis_get_i16be(reply, 1);
    R_getEncoders.right = rdis_get_i16be(reply, 3);
    return RDIS_OK;
}

/* pollEncoders: 8-byte positional frame, command 0x45 */
static int pollEncoders(void)
{
    unsigned char frame[8];
    unsigned char reply[8];
    size_t reply_len = 0;
    int rc;
    memset(frame, 0, sizeof frame);
    frame[0] = 0x45;
    if (rdis_send(frame, sizeof frame) != RDIS_OK)
        return RDIS_EIO;
    rc = rdis_await(0x65, reply, sizeof reply, &reply_len);
    if (rc != RDIS_OK)
        return rc;
    if (reply_len != 8)
        return RDIS_EPROTO;
    S_enc_left = rdis_get_i16be(reply, 1);
    S_enc_right = rdis_get_i16be(reply, 3);
    return RDIS_OK;
}

/* ---- interfaces ---- */

static int iface_drive(double in_linear, double in_angular)
{
    rdis_eval_error = 0;
    {
        double a_left = rdis_clamp(round((rdis_div((in_linear - rdis_div((in_angular * K_wheel_track_m), 2.0)), K_max_wheel_mps) * 100.0)), (-100.0), 100.0);
        double a_right = rdis_clamp(round((rdis_div((in_linear + rdis_div((in_angular * K_wheel_track_m), 2.0)), K_max_wheel_mps) * 100.0)), (-100.0), 100.0);
        int rc;
        if (rdis_eval_error)
            return RDIS_EEVAL;
        rc = setMotor((int)round(a_left), (int)round(a_right));
        if (rc != RDIS_OK)
            return rc;
    }
    if (rdis_eval_error)
        return RDIS_EEVAL;
    return RDIS_OK;
}

static int iface_halt(void)
{
    rdis_eval_error = 0;
    {
        int rc;
        if (rdis_eval_error)
            return RDIS_EEVAL;
        rc = stopMotors();
        if (rc != RDIS_OK)
            return rc;
    }
    if (rdis_eval_error)
        return RDIS_EEVAL;
    return RDIS_OK;
}

static int iface_readEncoders(void)
{
    double ret_left_m;
    double ret_right_m;
    rdis_eval_error = 0;
    {
        int rc;
        if (rdis_eval_error)
            return RDIS_EEVAL;
        rc = getEncoders();
        if (rc != RDIS_OK)
            return rc;
    }
    ret_left_m = rdis_div((double)R_getEncoders.left, K_ticks_per_meter);
    ret_right_m = rdis_div((double)R_getEncoders.right, K_ticks_per_meter);
    if (rdis_eval_error)
        return RDIS_EEVAL;
    printf("left_m=%.9g\n", ret_left_m);
    printf("right_m=%.9g\n", ret_right_m);
    return RDIS_OK;
}

static int iface_wheelTravel(void)
{
    double ret_left_m;
    double ret_right_m;
    rdis_eval_error = 0;
    ret_left_m = rdis_div(S_enc_left, K_ticks_per_meter);
    ret_right_m = rdis_div(S_enc_right, K_ticks_per_meter);
    if (rdis_eval_error)
        return RDIS_EEVAL;
    printf("left_m=%.9g\n", ret_left_m);
    printf("right_m=%.9g\n", ret_right_m);
    return RDIS_OK;
}

/* ---- read-eval loop ---- */

static const char *rdis_strerror(int rc)
{
    switch (rc) {
    case RDIS_EIO:
        return "io";
    case RDIS_ETIMEOUT:
        return "timeout";
    case RDIS_EPROTO:
        return "protocol";
    case RDIS_ERANGE:
        return "range";
    case RDIS_EEVAL:
        return "eval";
    case RDIS_EUSAGE:
        return "usage";
    default:
        return "unknown";
    }
}

static void rdis_help(void)
{
    printf("drive linear angular\n");
    printf("halt\n");
    printf("readEncoders\n");
    printf("wheelTravel\n");
    printf("raw setMotor left right\n");
    printf("raw stopMotors\n");
    printf("raw keepAlive\n");
    printf("raw getEncoders\n");
    printf("raw pollEncoders\n");
    printf("help\nquit\n");
}

static int rdis_dispatch(int argc, char **argv)
{
    if (strcmp(argv[0], "drive") == 0) {
        if (argc != 3)
            return RDIS_EUSAGE;
        return iface_drive(atof(argv[1]), atof(argv[2]));
    }
    if (strcmp(argv[0], "halt") == 0) {
        if (argc != 1)
            return RDIS_EUSAGE;
        return iface_halt();
    }
    if (strcmp(argv[0], "readEncoders") == 0) {
        if (argc != 1)
            return RDIS_EUSAGE;
        return iface_readEncoders();
    }
    if (strcmp(argv[0], "wheelTravel") == 0) {
        if (argc != 1)
            return RDIS_EUSAGE;
        return iface_wheelTravel();
    }
    if (strcmp(argv[0], "raw") == 0 && argc >= 2) {
        if (strcmp(argv[1], "setMotor") == 0) {
            int rc;
            if (argc != 4)
                return RDIS_EUSAGE;
            rc = setMotor(atoi(argv[2]), atoi(argv[3]));
            return rc;
        }
        if (strcmp(argv[1], "stopMotors") == 0) {
            int rc;
            if (argc != 2)
                return RDIS_EUSAGE;
            rc = stopMotors();
            return rc;
        }
        if (strcmp(argv[1], "keepAlive") == 0) {
            int rc;
            if (argc != 2)
                return RDIS_EUSAGE;
            rc = keepAlive();
            return rc;
        }
        if (strcmp(argv[1], "getEncoders") == 0) {
            int rc;
            if (argc != 2)
                return RDIS_EUSAGE;
            rc = getEncoders();
            if (rc == RDIS_OK) {
                printf("left=%ld\n", R_getEncoders.left);
                printf("right=%ld\n", R_getEncoders.right);
            }
            return rc;
        }
        if (strcmp(argv[1], "pollEncoders") == 0) {
            int rc;
            if (argc != 2)
                return RDIS_EUSAGE;
            rc = pollEncoders();
            return rc;
        }
    }
    return RDIS_EUSAGE;
}

/* Runs one input line. Returns 1 when the user asked to quit. */
static int rdis_run_line(char *line)
{
    char *argv[16];
    int argc = 0;
    int rc;
    char *tok = strtok(line, " \t\r\n");
    while (tok != NULL && argc < 16) {
        argv[argc++] = tok;
        tok = strtok(NULL, " \t\r\n");
    }
    if (argc == 0)
        return 0;
    if (strcmp(argv[0], "quit") == 0 || strcmp(argv[0], "exit") == 0)
        return 1;
    if (strcmp(argv[0], "help") == 0) {
        rdis_help();
        return 0;
    }
    rc = rdis_dispatch(argc, argv);
    if (rc == RDIS_OK)
        printf("ok\n");
    else
        printf("error %s\n", rdis_strerror(rc));
    return 0;
}

struct rdis_job {
    const char *name;
    int (*run)(void);
    long long period_ms;
    long long due_ms;
};

/* Keepalive first so it wins ties. */
static struct rdis_job rdis_jobs[] = {
    {"keepAlive", keepAlive, 500, 0},
    {"pollEncoders", pollEncoders, 100, 0},
};
#define RDIS_NJOBS (sizeof rdis_jobs / sizeof rdis_jobs[0])

int main(int argc, char **argv)
{
    const char *host = argc > 1 ? argv[1] : RDIS_DEFAULT_HOST;
    const char *port = argc > 2 ? argv[2] : RDIS_DEFAULT_PORT;
    const char *dry = getenv("RDIS_DRY_RUN");
    char line[512];
    size_t line_len = 0;
    size_t j;

    rdis_dry_run = dry != NULL && dry[0] != '\0' && strcmp(dry, "0") != 0;
    signal(SIGPIPE, SIG_IGN);
    setvbuf(stdout, NULL, _IOLBF, 0);
    if (!rdis_dry_run) {
        if (rdis_connect(host, port) != RDIS_OK) {
            fprintf(stderr, "cannot connect to %s:%s\n", host, port);
            return 1;
        }
        if (stopMotors() != RDIS_OK) {
            fprintf(stderr, "on_connect stopMotors failed\n");
            return 1;
        }
    }
    for (j = 0; j < RDIS_NJOBS; j++)
        rdis_jobs[j].due_ms = rdis_now_ms() + rdis_jobs[j].period_ms;

    for (;;) {
        fd_set rfds;
        struct timeval tv;
        struct timeval *timeout = NULL;
        int maxfd = 0;
        ssize_t n;
        char *nl;
        long long now = rdis_now_ms();
        long long next = -1;

        if (!rdis_dry_run) {
            for (j = 0; j < RDIS_NJOBS; j++) {
                struct rdis_job *job = &rdis_jobs[j];
                if (job->due_ms <= now) {
                    int rc = job->run();
                    if (rc != RDIS_OK)
                        fprintf(stderr, "%s: %s\n", job->name, rdis_strerror(rc));
                    job->due_ms += job->period_ms;
                    if (job->due_ms <= now)
                        job->due_ms = now + job->period_ms;
                }
                if (next < 0 || job->due_ms < next)
                    next = job->due_ms;
            }
            now = rdis_now_ms();
            next = next > now ? next - now : 0;
            tv.tv_sec = (time_t)(next / 1000);
            tv.tv_usec = (suseconds_t)((next % 1000) * 1000);
            timeout = &tv;
        }

        FD_ZERO(&rfds);
        FD_SET(STDIN_FILENO, &rfds);
        if (rdis_fd >= 0) {
            FD_SET(rdis_fd, &rfds);
            maxfd = rdis_fd;
        }
        if (select(maxfd + 1, &rfds, NULL, NULL, timeout) < 0) {
            if (errno == EINTR)
                continue;
            return 1;
        }
        if (rdis_fd >= 0 && FD_ISSET(rdis_fd, &rfds) && rdis_drain() != RDIS_OK) {
            fprintf(stderr, "connection closed\n");
            return 1;
        }
        if (!FD_ISSET(STDIN_FILENO, &rfds))
            continue;
        n = read(STDIN_FILENO, line + line_len, sizeof line - 1 - line_len);
        if (n <= 0)
            break;
        line_len += (size_t)n;
        line[line_len] = '\0';
        while ((nl = strchr(line, '\n')) != NULL) {
            size_t used = (size_t)(nl - line) + 1;
            *nl = '\0';
            if (rdis_run_line(line))
                return 0;
            memmove(line, line + used, line_len - used + 1);
            line_len -= used;
        }
        if (line_len == sizeof line - 1)
            line_len = 0;
    }
    if (line_len > 0)
        rdis_run_line(line);
    return 0;
}
