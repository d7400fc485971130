#include <stdio.h>

static int check(int n) {
  if (n < 2) {
    return 0;
  }
  int d = 2;
  while (d * d <= n) {
    if (n % d == 0) {
      return 0;
    }
    d++;
  }
  return 1;
}

int main(void) {
  printf("%d\n", check(97));
  return 0;
}
